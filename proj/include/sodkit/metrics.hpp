#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sodkit/plane.hpp"

namespace sodkit::metrics {

// Saliency values in [0, 1].
using SaliencyMap = Plane<double>;

inline constexpr int kThresholds = 256;
inline constexpr double kBetaSquared = 0.3;

struct PrCurve {
    std::array<double, kThresholds> thresholds{};  // k / 255
    std::array<double, kThresholds> precision{};
    std::array<double, kThresholds> recall{};
};

// pred >= k/255 for k = 0..255. Precision is 1 when nothing is predicted
// positive, recall is 1 when the ground truth is empty.
PrCurve pr_curve(const SaliencyMap& pred, const Mask& gt);

// (1 + b2) P R / (b2 P + R), 0 when the denominator vanishes.
double f_measure(double precision, double recall);

// min(2 * mean(pred), 1).
double adaptive_threshold(const SaliencyMap& pred);

// Positive where pred >= threshold and pred > 0; an all-zero map stays empty.
Mask binarize_adaptive(const SaliencyMap& pred);

// F-measure of one image at its adaptive threshold.
double adaptive_f(const SaliencyMap& pred, const Mask& gt);

double mean_f(std::span<const SaliencyMap> preds, std::span<const Mask> gts);

double mae(const SaliencyMap& pred, const Mask& gt);

// Structure measure: 0.5 object-aware + 0.5 region-aware similarity.
double s_measure(const SaliencyMap& pred, const Mask& gt);

enum class EMeasureMode {
    kAdaptive,            // binarize at the adaptive threshold
    kMeanOverThresholds,  // average over the 256-step threshold sweep
};

std::string to_string(EMeasureMode mode);
EMeasureMode parse_emeasure_mode(const std::string& text);

// Enhanced alignment measure of a map binarized by the given policy.
double e_measure(const SaliencyMap& pred, const Mask& gt, EMeasureMode mode = EMeasureMode::kAdaptive);

// Alignment score of an already-binary prediction.
double e_measure_binary(const Mask& pred, const Mask& gt);

struct ImageScores {
    std::string stem;
    double threshold = 0;  // adaptive threshold used for F
    double f = 0;
    double mae = 0;
    double s = 0;
    double e = 0;
};

struct MetricReport {
    std::string dataset;
    std::string model_id;
    std::vector<ImageScores> rows;  // sorted by stem
    double mean_f = 0;
    double mae = 0;
    double s = 0;
    double e = 0;
    PrCurve curve;  // per-threshold mean over images
    std::size_t n_images() const { return rows.size(); }
};

struct NamedPair {
    std::string stem;
    SaliencyMap pred;
    Mask gt;
};

struct EvalOptions {
    EMeasureMode emeasure = EMeasureMode::kAdaptive;
    std::string dataset;
    std::string model_id;
};

// Any input order; rows and aggregates come out in stem order.
MetricReport evaluate(std::vector<NamedPair> pairs, const EvalOptions& opt = {});

// Prediction PNGs matched to ground-truth PNGs by file stem. Predictions are
// resized (bilinear) to the ground-truth size when they differ. Throws
// DataError naming the first unpaired stem.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                              const EvalOptions& opt = {});

// Columns: stem,threshold,F,MAE,S,E.
void write_rows_csv(const MetricReport& report, const std::filesystem::path& path);
// Keys: mF, MAE, S, E, n_images.
void write_summary_json(const MetricReport& report, const std::filesystem::path& path);
// Columns: threshold,precision,recall (256 rows).
void write_pr_csv(const PrCurve& curve, const std::filesystem::path& path);
// Line plot of precision against recall.
void write_pr_plot(const PrCurve& curve, const std::filesystem::path& path, const std::string& title);

}  // namespace sodkit::metrics
