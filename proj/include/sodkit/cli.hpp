#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "sodkit/config.hpp"
#include "sodkit/model.hpp"

namespace sodkit::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigFailure = 1,
    kDataFailure = 2,
    kNumericFailure = 3,
};

// Environment variable naming the compute device. Only "cpu" is available.
inline constexpr const char* kDeviceEnv = "SODKIT_DEVICE";

// Entry point of the sodkit tool; argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

struct Prediction {
    Tensor p1;        // sigmoid of the first prediction, (1,1,H,W)
    Tensor p2;        // sigmoid of the feedback prediction
    Tensor combined;  // their mean
};

// Single-image inference at the network input size.
Prediction infer(const SaliencyNet& model, const RgbImage& image);

// One round(255 * combined) PNG per input image, resized back to the source
// resolution and named by stem. Returns the written paths.
std::vector<std::filesystem::path> predict_directory(const SaliencyNet& model, const std::filesystem::path& input,
                                                     const std::filesystem::path& output);

struct AblationCell {
    loss::LossMode loss;
    bool use_mre;
    metrics::MetricReport report;
    std::filesystem::path run_dir;
};

// Trains and evaluates every (loss, use_mre) combination on the configured
// dataset, writing <out>/ablation.csv and <out>/ablation.json.
std::vector<AblationCell> run_ablation(const RunConfig& base, const std::vector<loss::LossMode>& losses,
                                       const std::vector<bool>& mre, const std::filesystem::path& out,
                                       std::ostream& log);

}  // namespace sodkit::cli
