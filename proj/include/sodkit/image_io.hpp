#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sodkit/plane.hpp"

namespace sodkit {

// 8-bit RGB, interleaved, row-major.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}
    std::uint8_t* at(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int y, int x) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

using GrayImage = Plane<std::uint8_t>;

// All readers throw DataError on missing or undecodable files.
RgbImage read_rgb(const std::filesystem::path& path);
GrayImage read_gray(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const GrayImage& image);
void write_png(const std::filesystem::path& path, const RgbImage& image);

RgbImage resize_bilinear(const RgbImage& image, int height, int width);
GrayImage resize_nearest(const GrayImage& image, int height, int width);
Plane<double> resize_bilinear(const Plane<double>& map, int height, int width);

// Files with an image extension (.png .jpg .jpeg .bmp), sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace sodkit
