#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sodkit/image_io.hpp"
#include "sodkit/losses.hpp"
#include "sodkit/rng.hpp"
#include "sodkit/tensor.hpp"

namespace sodkit::data {

inline constexpr std::array<float, 3> kChannelMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kChannelStd{0.229f, 0.224f, 0.225f};

// (1,3,H,W): scaled to [0,1], minus channel mean, over channel std.
Tensor preprocess(const RgbImage& image);

struct Sample {
    std::string stem;
    Tensor image;  // (1,3,H,W), normalized
    Mask gt;
    Mask edge;
    Plane<float> alpha;
};

// Builds a sample from an image and a binary mask of the same size,
// deriving the edge and weight maps.
Sample make_sample(std::string stem, const RgbImage& image, Mask gt);

struct DatasetSpec {
    std::filesystem::path root;
    std::string image_dir = "images";
    std::string mask_dir = "masks";
    int height = 352;
    int width = 352;
    bool augment = false;
};

// <root>/<image_dir>/*.{jpg,png} paired by stem with <root>/<mask_dir>/*.png.
// Masks are binarized at > 127; images resized bilinearly, masks by nearest
// neighbour, both to the target size. Stems in lexicographic order.
std::vector<Sample> load_dataset(const DatasetSpec& spec);

Sample hflip(const Sample& s);

// Horizontal flip with probability 0.5.
Sample augment(const Sample& s, Rng& rng);

struct Batch {
    std::vector<std::string> stems;
    Tensor images;  // (N,3,H,W)
    loss::MaskBatch masks;
};

Batch make_batch(std::span<const Sample> samples);

struct SynthOptions {
    std::uint64_t seed = 7;
    int count = 8;
    int size = 64;
};

// Textured-noise images with one or two filled rectangles/ellipses and their
// exact masks, written in the load_dataset layout plus manifest.json.
void synth_dataset(const std::filesystem::path& root, const SynthOptions& opt);

}  // namespace sodkit::data
