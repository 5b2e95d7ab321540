#pragma once

#include "ssmae/network.hpp"

#include <cstdint>
#include <set>
#include <vector>

namespace ssmae {

struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// AdamW with decoupled weight decay. Decay applies to weight matrices only;
/// biases, norms, tokens and positional tables are not decayed. Tensors in
/// frozen groups (and ParamGroup::fixed) are never touched.
class AdamW {
public:
    AdamW() = default;
    AdamW(const NetworkParams& params, AdamWConfig config);

    void step(NetworkParams& params, const NetworkParams& grads, double lr_scale = 1.0,
              const std::set<ParamGroup>& frozen = {});

    const AdamWConfig& config() const { return config_; }
    std::int64_t steps() const { return steps_; }

    // Serialised state, one moment pair per visited tensor.
    std::vector<Matrix>& first_moments() { return m_; }
    std::vector<Matrix>& second_moments() { return v_; }
    void set_steps(std::int64_t s) { steps_ = s; }

private:
    AdamWConfig config_;
    std::int64_t steps_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

/// Whether a tensor is decayed: 2-D weight matrices only.
bool is_decayed(const std::string& name);

}  // namespace ssmae
