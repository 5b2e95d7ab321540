#include "ssmae/optimizer.hpp"

#include <cmath>

namespace ssmae {

bool is_decayed(const std::string& name) {
    const auto ends_with = [&](const char* suffix) {
        const std::string s(suffix);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return ends_with("_w") && !ends_with("ln1_w") && !ends_with("ln2_w");
}

AdamW::AdamW(const NetworkParams& params, AdamWConfig config) : config_(config) {
    params.visit([&](const std::string&, ParamGroup, const Matrix& p) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    });
}

void AdamW::step(NetworkParams& params, const NetworkParams& grads, double lr_scale,
                 const std::set<ParamGroup>& frozen) {
    ++steps_;
    const double lr = config_.lr * lr_scale;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    std::vector<const Matrix*> g;
    grads.visit([&](const std::string&, ParamGroup, const Matrix& m) { g.push_back(&m); });
    std::size_t k = 0;
    params.visit([&](const std::string& name, ParamGroup group, Matrix& p) {
        const std::size_t i = k++;
        if (group == ParamGroup::fixed || frozen.count(group)) return;
        Matrix& m = m_[i];
        Matrix& v = v_[i];
        m = config_.beta1 * m + (1.0 - config_.beta1) * *g[i];
        v = config_.beta2 * v + (1.0 - config_.beta2) * g[i]->cwiseProduct(*g[i]);
        if (is_decayed(name)) p *= 1.0 - lr * config_.weight_decay;
        p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.eps);
    });
}

}  // namespace ssmae
