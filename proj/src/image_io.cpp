#include "sodkit/image_io.hpp"

#include <algorithm>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace sodkit {

namespace fs = std::filesystem;

namespace {

cv::Mat load(const fs::path& path, int flags) {
    if (!fs::exists(path)) throw DataError("file not found: " + path.string());
    cv::Mat m = cv::imread(path.string(), flags);
    if (m.empty()) throw DataError("cannot decode image: " + path.string());
    return m;
}

void store(const fs::path& path, const cv::Mat& m) {
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), m, params);
    } catch (const cv::Exception&) {
        ok = false;
    }
    if (!ok) throw DataError("cannot write image: " + path.string());
}

}  // namespace

RgbImage read_rgb(const fs::path& path) {
    cv::Mat bgr = load(path, cv::IMREAD_COLOR);
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    RgbImage img(rgb.rows, rgb.cols);
    for (int y = 0; y < rgb.rows; ++y) std::copy_n(rgb.ptr<std::uint8_t>(y), rgb.cols * 3, img.at(y, 0));
    return img;
}

GrayImage read_gray(const fs::path& path) {
    cv::Mat g = load(path, cv::IMREAD_GRAYSCALE);
    GrayImage img(g.rows, g.cols);
    for (int y = 0; y < g.rows; ++y) std::copy_n(g.ptr<std::uint8_t>(y), g.cols, &img.at(y, 0));
    return img;
}

void write_png(const fs::path& path, const GrayImage& image) {
    cv::Mat m(image.height, image.width, CV_8UC1, const_cast<std::uint8_t*>(image.values.data()));
    store(path, m);
}

void write_png(const fs::path& path, const RgbImage& image) {
    cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    store(path, bgr);
}

RgbImage resize_bilinear(const RgbImage& image, int height, int width) {
    if (image.height == height && image.width == width) return image;
    cv::Mat src(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    RgbImage out(height, width);
    for (int y = 0; y < height; ++y) std::copy_n(dst.ptr<std::uint8_t>(y), width * 3, out.at(y, 0));
    return out;
}

GrayImage resize_nearest(const GrayImage& image, int height, int width) {
    if (image.height == height && image.width == width) return image;
    cv::Mat src(image.height, image.width, CV_8UC1, const_cast<std::uint8_t*>(image.values.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
    GrayImage out(height, width);
    for (int y = 0; y < height; ++y) std::copy_n(dst.ptr<std::uint8_t>(y), width, &out.at(y, 0));
    return out;
}

Plane<double> resize_bilinear(const Plane<double>& map, int height, int width) {
    if (map.height == height && map.width == width) return map;
    cv::Mat src(map.height, map.width, CV_64FC1, const_cast<double*>(map.values.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    Plane<double> out(height, width);
    for (int y = 0; y < height; ++y) std::copy_n(dst.ptr<double>(y), width, &out.at(y, 0));
    return out;
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    return out;
}

}  // namespace sodkit
