#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace paracap {

/// 8-bit RGB raster, row-major, channels interleaved.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
    std::uint8_t* at(int x, int y) { return data.data() + offset(x, y); }
    const std::uint8_t* at(int x, int y) const { return data.data() + offset(x, y); }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Binary P6 with maxval 255. Comments in the header are accepted on read.
RgbImage read_ppm(const std::filesystem::path& path);
RgbImage decode_ppm(const std::string& bytes);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);
std::string encode_ppm(const RgbImage& image);

}  // namespace paracap
