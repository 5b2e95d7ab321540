#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ssmae {

/// 8-bit interleaved pixels; 1 (gray) or 3 (RGB) channels.
struct Bitmap {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    friend bool operator==(const Bitmap&, const Bitmap&) = default;
};

void write_png(const std::filesystem::path& file, const Bitmap& bitmap);
Bitmap read_png(const std::filesystem::path& file);

/// Binary PPM (P6) / PGM (P5) reader, maxval 255.
Bitmap read_pnm(const std::filesystem::path& file);

}  // namespace ssmae
