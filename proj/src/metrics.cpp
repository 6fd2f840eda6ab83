#include "sodkit/metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>

namespace sodkit::metrics {

namespace {

constexpr double kEps = DBL_EPSILON;

void require_map(const SaliencyMap& pred, const Mask& gt, const char* what) {
    require_same_shape(pred, gt, what);
    if (pred.size() == 0) throw DimensionError(std::string(what) + ": empty map");
    for (double v : pred.values)
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError(std::string(what) + ": prediction outside [0,1]");
    for (auto v : gt.values)
        if (v > 1) throw ContractError(std::string(what) + ": ground truth is not binary");
}

double mean_of(const SaliencyMap& m) {
    double s = 0.0;
    for (double v : m.values) s += v;
    return s / static_cast<double>(m.size());
}

double foreground_ratio(const Mask& gt) {
    std::size_t c = 0;
    for (auto v : gt.values) c += v;
    return static_cast<double>(c) / static_cast<double>(gt.size());
}

// Largest k in [0, 255] with k/255 <= p.
int threshold_bin(double p) {
    int k = static_cast<int>(std::floor(p * 255.0));
    k = std::clamp(k, 0, kThresholds - 1);
    while (k + 1 < kThresholds && (k + 1) / 255.0 <= p) ++k;
    while (k > 0 && k / 255.0 > p) --k;
    return k;
}

struct Counts {
    double tp = 0, fp = 0, fn = 0;
};

double precision_of(const Counts& c) { return c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 1.0; }
double recall_of(const Counts& c) { return c.tp + c.fn > 0 ? c.tp / (c.tp + c.fn) : 1.0; }

Counts confusion(const Mask& pred, const Mask& gt) {
    Counts c;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (pred.values[i] && gt.values[i]) ++c.tp;
        else if (pred.values[i]) ++c.fp;
        else if (gt.values[i]) ++c.fn;
    }
    return c;
}

// Object-aware similarity of values drawn from one region.
double object_score(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double n = static_cast<double>(v.size());
    const double x = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double sq = 0.0;
    for (double a : v) sq += (a - x) * (a - x);
    const double sigma = v.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const SaliencyMap& pred, const Mask& gt) {
    std::vector<double> fg, bg;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt.values[i]) fg.push_back(pred.values[i]);
        else bg.push_back(1.0 - pred.values[i]);
    }
    const double u = foreground_ratio(gt);
    return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

// SSIM-style similarity of one rectangular block.
double block_ssim(const SaliencyMap& pred, const Mask& gt, int y0, int y1, int x0, int x1) {
    const double n = static_cast<double>(y1 - y0) * (x1 - x0);
    double mx = 0.0, my = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            mx += pred.at(y, x);
            my += gt.at(y, x);
        }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const double dx = pred.at(y, x) - mx;
            const double dy = gt.at(y, x) - my;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
    const double norm = n - 1.0 + kEps;
    sxx /= norm;
    syy /= norm;
    sxy /= norm;
    const double alpha = 4.0 * mx * my * sxy;
    const double beta = (mx * mx + my * my) * (sxx + syy);
    if (alpha != 0.0) return alpha / (beta + kEps);
    return beta == 0.0 ? 1.0 : 0.0;
}

double s_region(const SaliencyMap& pred, const Mask& gt) {
    const int h = gt.height, w = gt.width;
    double sy = 0.0, sx = 0.0, count = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (gt.at(y, x)) {
                sy += y;
                sx += x;
                ++count;
            }
    // Centroid split, rounded half-to-even, as a count of leading rows/cols.
    const int cx = static_cast<int>(std::nearbyint(sx / count)) + 1;
    const int cy = static_cast<int>(std::nearbyint(sy / count)) + 1;
    const double area = static_cast<double>(h) * w;
    const double w1 = static_cast<double>(cx) * cy / area;
    const double w2 = static_cast<double>(w - cx) * cy / area;
    const double w3 = static_cast<double>(cx) * (h - cy) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    auto block = [&](int y0, int y1, int x0, int x1) {
        return (y1 > y0 && x1 > x0) ? block_ssim(pred, gt, y0, y1, x0, x1) : 0.0;
    };
    return w1 * block(0, cy, 0, cx) + w2 * block(0, cy, cx, w) + w3 * block(cy, h, 0, cx) +
           w4 * block(cy, h, cx, w);
}

Mask binarize_at(const SaliencyMap& pred, double tau) {
    Mask m(pred.height, pred.width);
    for (std::size_t i = 0; i < pred.size(); ++i) m.values[i] = pred.values[i] >= tau;
    return m;
}

}  // namespace

PrCurve pr_curve(const SaliencyMap& pred, const Mask& gt) {
    require_map(pred, gt, "pr_curve");
    // Pixels passing threshold k are those whose bin is >= k.
    std::array<double, kThresholds> fg_hist{}, bg_hist{};
    double total_fg = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int k = threshold_bin(pred.values[i]);
        if (gt.values[i]) {
            ++fg_hist[k];
            ++total_fg;
        } else {
            ++bg_hist[k];
        }
    }
    PrCurve curve;
    double tp = 0, fp = 0;
    for (int k = kThresholds - 1; k >= 0; --k) {
        tp += fg_hist[k];
        fp += bg_hist[k];
        const Counts c{tp, fp, total_fg - tp};
        curve.thresholds[k] = k / 255.0;
        curve.precision[k] = precision_of(c);
        curve.recall[k] = recall_of(c);
    }
    return curve;
}

double f_measure(double precision, double recall) {
    const double den = kBetaSquared * precision + recall;
    return den > 0.0 ? (1.0 + kBetaSquared) * precision * recall / den : 0.0;
}

double adaptive_threshold(const SaliencyMap& pred) { return std::min(2.0 * mean_of(pred), 1.0); }

Mask binarize_adaptive(const SaliencyMap& pred) {
    const double tau = adaptive_threshold(pred);
    Mask m(pred.height, pred.width);
    for (std::size_t i = 0; i < pred.size(); ++i) m.values[i] = pred.values[i] >= tau && pred.values[i] > 0.0;
    return m;
}

double adaptive_f(const SaliencyMap& pred, const Mask& gt) {
    require_map(pred, gt, "adaptive_f");
    const Counts c = confusion(binarize_adaptive(pred), gt);
    return f_measure(precision_of(c), recall_of(c));
}

double mean_f(std::span<const SaliencyMap> preds, std::span<const Mask> gts) {
    if (preds.empty()) throw ContractError("mean_f: empty dataset");
    if (preds.size() != gts.size()) throw DimensionError("mean_f: prediction and ground-truth counts differ");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += adaptive_f(preds[i], gts[i]);
    return s / static_cast<double>(preds.size());
}

double mae(const SaliencyMap& pred, const Mask& gt) {
    require_map(pred, gt, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred.values[i] - gt.values[i]);
    return s / static_cast<double>(pred.size());
}

double s_measure(const SaliencyMap& pred, const Mask& gt) {
    require_map(pred, gt, "s_measure");
    const double y = foreground_ratio(gt);
    if (y == 0.0) return 1.0 - mean_of(pred);
    if (y == 1.0) return mean_of(pred);
    const double q = 0.5 * s_object(pred, gt) + 0.5 * s_region(pred, gt);
    return std::max(q, 0.0);
}

std::string to_string(EMeasureMode mode) {
    return mode == EMeasureMode::kAdaptive ? "adaptive" : "mean";
}

EMeasureMode parse_emeasure_mode(const std::string& text) {
    if (text == "adaptive") return EMeasureMode::kAdaptive;
    if (text == "mean") return EMeasureMode::kMeanOverThresholds;
    throw ContractError("unknown E-measure mode '" + text + "' (expected adaptive or mean)");
}

double e_measure_binary(const Mask& pred, const Mask& gt) {
    require_same_shape(pred, gt, "e_measure");
    const double n = static_cast<double>(gt.size());
    double mp = 0.0;
    for (auto v : pred.values) mp += v;
    mp /= n;
    const double mg = foreground_ratio(gt);
    if (mg == 0.0) return 1.0 - mp;
    if (mg == 1.0) return mp;
    double sum = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double fp = pred.values[i] - mp;
        const double fg = gt.values[i] - mg;
        const double den = fg * fg + fp * fp;
        const double xi = den == 0.0 ? 1.0 : 2.0 * fg * fp / den;
        sum += (1.0 + xi) * (1.0 + xi) / 4.0;
    }
    return sum / n;
}

double e_measure(const SaliencyMap& pred, const Mask& gt, EMeasureMode mode) {
    require_map(pred, gt, "e_measure");
    if (mode == EMeasureMode::kAdaptive) return e_measure_binary(binarize_adaptive(pred), gt);
    double s = 0.0;
    for (int k = 0; k < kThresholds; ++k) s += e_measure_binary(binarize_at(pred, k / 255.0), gt);
    return s / kThresholds;
}

MetricReport evaluate(std::vector<NamedPair> pairs, const EvalOptions& opt) {
    if (pairs.empty()) throw ContractError("evaluate: no images");
    std::sort(pairs.begin(), pairs.end(), [](const NamedPair& a, const NamedPair& b) { return a.stem < b.stem; });
    MetricReport r;
    r.dataset = opt.dataset;
    r.model_id = opt.model_id;
    for (const auto& p : pairs) {
        ImageScores row;
        row.stem = p.stem;
        row.threshold = adaptive_threshold(p.pred);
        row.f = adaptive_f(p.pred, p.gt);
        row.mae = mae(p.pred, p.gt);
        row.s = s_measure(p.pred, p.gt);
        row.e = e_measure(p.pred, p.gt, opt.emeasure);
        const PrCurve c = pr_curve(p.pred, p.gt);
        for (int k = 0; k < kThresholds; ++k) {
            r.curve.precision[k] += c.precision[k];
            r.curve.recall[k] += c.recall[k];
        }
        r.rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(r.rows.size());
    for (const auto& row : r.rows) {
        r.mean_f += row.f;
        r.mae += row.mae;
        r.s += row.s;
        r.e += row.e;
    }
    r.mean_f /= n;
    r.mae /= n;
    r.s /= n;
    r.e /= n;
    for (int k = 0; k < kThresholds; ++k) {
        r.curve.thresholds[k] = k / 255.0;
        r.curve.precision[k] /= n;
        r.curve.recall[k] /= n;
    }
    return r;
}

}  // namespace sodkit::metrics
