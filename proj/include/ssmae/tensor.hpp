#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssmae {

using Real = double;

/// Row-major dense matrix. Token sequences are stored one token per row.
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
using ColVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

/// Library error. `code` is a short machine-readable tag used by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// H x W x C image, stored interleaved (HWC).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<Real> data;

    Image() = default;
    Image(int h, int w, int c, Real fill = 0)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    Real& at(int y, int x, int c) { return data[index(y, x, c)]; }
    Real at(int y, int x, int c) const { return data[index(y, x, c)]; }

    bool same_shape(const Image& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }
    bool all_finite() const;

    friend bool operator==(const Image&, const Image&) = default;
};

inline bool Image::all_finite() const {
    for (Real v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace ssmae
