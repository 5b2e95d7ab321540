#pragma once

#include "ssmae/metrics.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ssmae {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal SVG line chart; non-finite points are skipped.
std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<Series>& series, bool step = false);

/// Writes loss.svg, accuracy.svg and gate.svg for one or more metrics streams.
/// Returns the written files.
std::vector<std::filesystem::path> plot_metrics(
    const std::vector<std::filesystem::path>& metrics_files, const std::filesystem::path& out_dir);

}  // namespace ssmae
