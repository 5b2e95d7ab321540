#include "ssmae/png_io.hpp"

#include "ssmae/tensor.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>

namespace ssmae {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& file, const char* mode) {
    FilePtr f(std::fopen(file.c_str(), mode));
    if (!f) throw Error("io", "cannot open " + file.string());
    return f;
}

}  // namespace

void write_png(const std::filesystem::path& file, const Bitmap& bitmap) {
    if (bitmap.channels != 1 && bitmap.channels != 3) {
        throw Error("png", "only gray and RGB bitmaps are supported");
    }
    FilePtr f = open_file(file, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("png", "cannot allocate PNG writer");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("png", "failed writing " + file.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(bitmap.width),
                 static_cast<png_uint_32>(bitmap.height), 8,
                 bitmap.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(bitmap.width) * bitmap.channels;
    for (int y = 0; y < bitmap.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(bitmap.pixels.data() + y * stride));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Bitmap read_png(const std::filesystem::path& file) {
    FilePtr f = open_file(file, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("png", "cannot allocate PNG reader");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("png", "malformed PNG " + file.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    Bitmap bmp;
    bmp.width = static_cast<int>(png_get_image_width(png, info));
    bmp.height = static_cast<int>(png_get_image_height(png, info));
    bmp.channels = static_cast<int>(png_get_channels(png, info));
    bmp.pixels.resize(static_cast<std::size_t>(bmp.width) * bmp.height * bmp.channels);
    const std::size_t stride = static_cast<std::size_t>(bmp.width) * bmp.channels;
    for (int y = 0; y < bmp.height; ++y) png_read_row(png, bmp.pixels.data() + y * stride, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return bmp;
}

Bitmap read_pnm(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("io", "cannot open " + file.string());
    std::string magic;
    in >> magic;
    auto next_int = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string comment;
            std::getline(in, comment);
            in >> std::ws;
        }
        int v = -1;
        in >> v;
        return v;
    };
    Bitmap bmp;
    if (magic == "P6") {
        bmp.channels = 3;
    } else if (magic == "P5") {
        bmp.channels = 1;
    } else {
        throw Error("format", "unsupported PNM magic in " + file.string());
    }
    bmp.width = next_int();
    bmp.height = next_int();
    const int maxval = next_int();
    if (bmp.width <= 0 || bmp.height <= 0 || maxval != 255) {
        throw Error("format", "unsupported PNM header in " + file.string());
    }
    in.get();
    bmp.pixels.resize(static_cast<std::size_t>(bmp.width) * bmp.height * bmp.channels);
    in.read(reinterpret_cast<char*>(bmp.pixels.data()),
            static_cast<std::streamsize>(bmp.pixels.size()));
    if (!in) throw Error("format", "truncated PNM " + file.string());
    return bmp;
}

}  // namespace ssmae
