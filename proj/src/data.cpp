#include "sodkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>

namespace sodkit::data {

namespace fs = std::filesystem;

Tensor preprocess(const RgbImage& image) {
    if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width * 3)
        throw DimensionError("preprocess expects 3-channel 8-bit RGB");
    Tensor t(Shape{1, 3, image.height, image.width});
    for (int c = 0; c < 3; ++c) {
        float* dst = t.plane(0, c);
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                dst[y * image.width + x] = (image.at(y, x)[c] / 255.0f - kChannelMean[c]) / kChannelStd[c];
    }
    return t;
}

Sample make_sample(std::string stem, const RgbImage& image, Mask gt) {
    if (image.height != gt.height || image.width != gt.width)
        throw DimensionError("image and mask sizes differ for '" + stem + "'");
    Sample s;
    s.stem = std::move(stem);
    s.image = preprocess(image);
    s.edge = loss::edge_map(gt);
    s.alpha = loss::alpha_weights(s.edge);
    s.gt = std::move(gt);
    return s;
}

std::vector<Sample> load_dataset(const DatasetSpec& spec) {
    const fs::path image_dir = spec.root / spec.image_dir;
    const fs::path mask_dir = spec.root / spec.mask_dir;
    if (!fs::is_directory(image_dir)) throw DataError("image directory not found: " + image_dir.string());
    if (!fs::is_directory(mask_dir)) throw DataError("mask directory not found: " + mask_dir.string());

    std::map<std::string, fs::path> masks;
    for (const auto& p : list_images(mask_dir))
        if (!masks.emplace(p.stem().string(), p).second)
            throw DataError("duplicate mask stem '" + p.stem().string() + "'");
    std::map<std::string, fs::path> images;
    for (const auto& p : list_images(image_dir))
        if (!images.emplace(p.stem().string(), p).second)
            throw DataError("duplicate image stem '" + p.stem().string() + "'");
    for (const auto& [stem, _] : images)
        if (!masks.count(stem)) throw DataError("image '" + stem + "' has no mask in " + mask_dir.string());
    for (const auto& [stem, _] : masks)
        if (!images.count(stem)) throw DataError("mask '" + stem + "' has no image in " + image_dir.string());
    if (images.empty()) throw DataError("empty dataset: " + image_dir.string());

    std::vector<Sample> out;
    out.reserve(images.size());
    for (const auto& [stem, path] : images) {
        const RgbImage img = resize_bilinear(read_rgb(path), spec.height, spec.width);
        const GrayImage raw = resize_nearest(read_gray(masks.at(stem)), spec.height, spec.width);
        Mask gt(raw.height, raw.width);
        for (std::size_t i = 0; i < raw.size(); ++i) gt.values[i] = raw.values[i] > 127;
        out.push_back(make_sample(stem, img, std::move(gt)));
    }
    return out;
}

namespace {

template <typename T>
void flip_rows(Plane<T>& p) {
    for (int y = 0; y < p.height; ++y) {
        auto row = p.values.begin() + static_cast<std::ptrdiff_t>(y) * p.width;
        std::reverse(row, row + p.width);
    }
}

}  // namespace

Sample hflip(const Sample& s) {
    Sample f = s;
    const Shape sh = s.image.shape();
    for (int c = 0; c < sh.c; ++c) {
        float* p = f.image.plane(0, c);
        for (int y = 0; y < sh.h; ++y) std::reverse(p + y * sh.w, p + (y + 1) * sh.w);
    }
    flip_rows(f.gt);
    flip_rows(f.edge);
    flip_rows(f.alpha);
    return f;
}

Sample augment(const Sample& s, Rng& rng) { return rng.bernoulli(0.5) ? hflip(s) : s; }

Batch make_batch(std::span<const Sample> samples) {
    if (samples.empty()) throw ContractError("make_batch: no samples");
    const Shape is = samples[0].image.shape();
    const int n = static_cast<int>(samples.size());
    Batch b;
    b.images = Tensor(Shape{n, 3, is.h, is.w});
    b.masks.gt = Tensor(Shape{n, 1, is.h, is.w});
    b.masks.edge = Tensor(Shape{n, 1, is.h, is.w});
    b.masks.alpha = Tensor(Shape{n, 1, is.h, is.w});
    for (int k = 0; k < n; ++k) {
        const Sample& s = samples[k];
        if (s.image.shape() != is) throw DimensionError("make_batch: samples differ in size");
        b.stems.push_back(s.stem);
        std::copy_n(s.image.data(), s.image.numel(), b.images.plane(k, 0));
        for (std::size_t i = 0; i < s.gt.size(); ++i) {
            b.masks.gt.plane(k, 0)[i] = s.gt.values[i];
            b.masks.edge.plane(k, 0)[i] = s.edge.values[i];
            b.masks.alpha.plane(k, 0)[i] = s.alpha.values[i];
        }
    }
    return b;
}

namespace {

struct ShapeDraw {
    bool ellipse;
    double cx, cy, rx, ry;

    bool contains(int x, int y) const {
        const double px = x + 0.5, py = y + 0.5;
        if (!ellipse) return std::abs(px - cx) <= rx && std::abs(py - cy) <= ry;
        const double dx = (px - cx) / rx, dy = (py - cy) / ry;
        return dx * dx + dy * dy <= 1.0;
    }
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

void synth_dataset(const fs::path& root, const SynthOptions& opt) {
    if (opt.count < 1) throw ContractError("synth_dataset: count must be >= 1");
    if (opt.size < 32 || opt.size % 32 != 0) throw ContractError("synth_dataset: size must be a multiple of 32");
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "masks", ec);
    if (!fs::is_directory(root / "images") || !fs::is_directory(root / "masks"))
        throw DataError("cannot create dataset directories under " + root.string());

    const int size = opt.size;
    const int digits = std::max(3, static_cast<int>(std::to_string(opt.count - 1).size()));
    for (int i = 0; i < opt.count; ++i) {
        Rng rng = Rng::derive(opt.seed, static_cast<std::uint64_t>(i));
        Mask mask;
        // Rejection on foreground fraction.
        for (;;) {
            const int shapes = rng.uniform_int(1, 2);
            std::vector<ShapeDraw> draws;
            for (int k = 0; k < shapes; ++k)
                draws.push_back({rng.bernoulli(0.5), rng.uniform(0.2, 0.8) * size, rng.uniform(0.2, 0.8) * size,
                                 rng.uniform(0.12, 0.32) * size, rng.uniform(0.12, 0.32) * size});
            mask = Mask(size, size);
            std::size_t fg = 0;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    bool in = false;
                    for (const auto& d : draws) in = in || d.contains(x, y);
                    mask.at(y, x) = in;
                    fg += in;
                }
            const double frac = static_cast<double>(fg) / (static_cast<double>(size) * size);
            if (frac >= 0.05 && frac <= 0.6) break;
        }

        std::array<double, 3> base{}, fore{};
        for (int c = 0; c < 3; ++c) {
            base[c] = rng.uniform(20.0, 110.0);
            fore[c] = std::clamp(255.0 - base[c] + rng.uniform(-25.0, 25.0), 140.0, 250.0);
        }
        const double fx = rng.uniform(0.15, 0.6), fy = rng.uniform(0.15, 0.6), phase = rng.uniform(0.0, 6.283);
        RgbImage img(size, size);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                std::uint8_t* px = img.at(y, x);
                if (mask.at(y, x)) {
                    for (int c = 0; c < 3; ++c) px[c] = to_byte(fore[c] + rng.uniform(-15.0, 15.0));
                } else {
                    const double wave = 25.0 * std::sin(fx * x + fy * y + phase);
                    for (int c = 0; c < 3; ++c) px[c] = to_byte(base[c] + wave + rng.uniform(-20.0, 20.0));
                }
            }

        std::string stem = std::to_string(i);
        stem = "synth_" + std::string(digits - stem.size(), '0') + stem;
        GrayImage m8(size, size);
        for (std::size_t k = 0; k < mask.size(); ++k) m8.values[k] = mask.values[k] ? 255 : 0;
        write_png(root / "images" / (stem + ".png"), img);
        write_png(root / "masks" / (stem + ".png"), m8);
    }

    nlohmann::ordered_json manifest;
    manifest["generator"] = "sodkit-synth-v1";
    manifest["seed"] = opt.seed;
    manifest["count"] = opt.count;
    manifest["size"] = opt.size;
    manifest["foreground_fraction"] = {0.05, 0.6};
    std::ofstream os(root / "manifest.json", std::ios::trunc);
    if (!os) throw DataError("cannot write manifest under " + root.string());
    os << manifest.dump(2) << '\n';
}

}  // namespace sodkit::data
