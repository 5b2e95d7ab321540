#include "ssmae/plot.hpp"

#include "ssmae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace ssmae {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kLeft = 64;
constexpr int kRight = 150;
constexpr int kTop = 36;
constexpr int kBottom = 48;

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                               "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<Series>& series, bool step) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const Series& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
       << escape(title) << "</text>\n"
       << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double yv = y0 + (y1 - y0) * t / 4.0;
        const double xv = x0 + (x1 - x0) * t / 4.0;
        os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << py(yv) << "\" y2=\""
           << py(yv) << "\" stroke=\"#ddd\"/>\n"
           << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
           << num(yv) << "</text>\n"
           << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
           << num(xv) << "</text>\n";
    }
    os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10
       << "\" text-anchor=\"middle\">epoch</text>\n"
       << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << kTop + ph / 2 << ")\">" << escape(y_label) << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const Series& s = series[k];
        const char* color = kColors[k % std::size(kColors)];
        std::ostringstream pts;
        bool have_prev = false;
        double prev_y = 0.0;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (step && have_prev) pts << px(s.x[i]) << ',' << py(prev_y) << ' ';
            pts << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
            prev_y = s.y[i];
            have_prev = true;
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\""
           << pts.str() << "\"/>\n";
        const int ly = kTop + 14 + static_cast<int>(k) * 18;
        os << "<line x1=\"" << kLeft + pw + 10 << "\" x2=\"" << kLeft + pw + 30 << "\" y1=\"" << ly - 4
           << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
           << "<text x=\"" << kLeft + pw + 34 << "\" y=\"" << ly << "\">" << escape(s.label)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<std::filesystem::path> plot_metrics(
    const std::vector<std::filesystem::path>& metrics_files, const std::filesystem::path& out_dir) {
    if (metrics_files.empty()) throw Error("usage", "no metrics files given");
    std::vector<Series> loss, acc, gate;
    const bool many = metrics_files.size() > 1;
    for (const auto& file : metrics_files) {
        const std::vector<MetricsRecord> records = read_metrics(file);
        if (records.empty()) throw Error("metrics", "no records in " + file.string());
        const std::string tag = many ? file.parent_path().filename().string() + ":" : "";
        Series recon{tag + "recon", {}, {}}, sup{tag + "sup", {}, {}}, pseudo{tag + "pseudo", {}, {}},
            total{tag + "total", {}, {}};
        Series val{tag + "val", {}, {}}, conf{tag + "val_conf", {}, {}}, test{tag + "test", {}, {}};
        Series g{tag + "gate", {}, {}}, lp{tag + "lambda_p_eff", {}, {}};
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (const MetricsRecord& r : records) {
            const double e = r.epoch;
            for (Series* s : {&recon, &sup, &pseudo, &total, &val, &conf, &test, &g, &lp}) s->x.push_back(e);
            recon.y.push_back(r.loss_recon.value_or(nan));
            sup.y.push_back(r.loss_sup);
            pseudo.y.push_back(r.loss_pseudo);
            total.y.push_back(r.loss_total);
            val.y.push_back(r.val_acc.value_or(nan));
            conf.y.push_back(r.stage == "pretrain" ? r.val_conf_acc : nan);
            test.y.push_back(r.test_acc.value_or(nan));
            g.y.push_back(r.gate ? 1.0 : 0.0);
            lp.y.push_back(r.lambda_p_eff);
        }
        for (Series* s : {&recon, &sup, &pseudo, &total}) loss.push_back(std::move(*s));
        for (Series* s : {&val, &conf, &test}) acc.push_back(std::move(*s));
        gate.push_back(std::move(g));
        gate.push_back(std::move(lp));
    }
    std::filesystem::create_directories(out_dir);
    const std::vector<std::pair<std::string, std::string>> charts = {
        {"loss.svg", render_line_chart("Training losses", "loss", loss)},
        {"accuracy.svg", render_line_chart("Accuracy", "accuracy", acc)},
        {"gate.svg", render_line_chart("Pseudo-label gate", "state", gate, true)},
    };
    std::vector<std::filesystem::path> written;
    for (const auto& [name, svg] : charts) {
        const auto path = out_dir / name;
        std::ofstream out(path, std::ios::binary);
        out << svg;
        if (!out) throw Error("io", "cannot write " + path.string());
        written.push_back(path);
    }
    return written;
}

}  // namespace ssmae
