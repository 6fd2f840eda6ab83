#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "sodkit/errors.hpp"
#include "sodkit/plane.hpp"
#include "sodkit/tensor.hpp"

namespace sodkit {
struct PredictionPair;
class Var;
}  // namespace sodkit

namespace sodkit::loss {

// The loss grid of the ablation study. kWeighted is the full training loss.
enum class LossMode { kBce, kIou, kBceIou, kWeighted };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);

struct LossConfig {
    double beta = 0.5;
    double prob_clamp_epsilon = 1e-7;
    LossMode mode = LossMode::kWeighted;

    void validate() const;
    bool operator==(const LossConfig&) const = default;
};

// Morphological gradient of a binary mask: dilate XOR erode with a 3x3 square,
// pixels outside the image read as 0.
Mask edge_map(const Mask& gt);

// 1 + sigmoid(E) per pixel.
Plane<float> alpha_weights(const Mask& edge);

template <std::floating_point T>
T sigmoid(T z) {
    return T(1) / (T(1) + std::exp(-z));
}

namespace detail {
template <typename T>
void require_sizes(std::span<const T> a, std::span<const T> b, std::span<const T> c) {
    if (a.size() != b.size() || a.size() != c.size())
        throw DimensionError("loss inputs differ in size: " + std::to_string(a.size()) + ", " +
                             std::to_string(b.size()) + ", " + std::to_string(c.size()));
}
}  // namespace detail

// -sum (1+a_n) [g log p + (1-g) log(1-p)] / sum a_m, p clamped to [eps, 1-eps].
template <std::floating_point T>
T wbce(std::span<const T> prob, std::span<const T> gt, std::span<const T> alpha, T eps = T(1e-7)) {
    detail::require_sizes(prob, gt, alpha);
    T num = 0, den = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const T p = std::clamp(prob[i], eps, T(1) - eps);
        num += (T(1) + alpha[i]) * (gt[i] * std::log(p) + (T(1) - gt[i]) * std::log(T(1) - p));
        den += alpha[i];
    }
    return -num / den;
}

// 1 - sum g p (1+a) / sum (g + p - g p)(1+a); 0 when both maps are empty.
template <std::floating_point T>
T wiou(std::span<const T> prob, std::span<const T> gt, std::span<const T> alpha) {
    detail::require_sizes(prob, gt, alpha);
    T inter = 0, uni = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const T w = T(1) + alpha[i];
        inter += gt[i] * prob[i] * w;
        uni += (gt[i] + prob[i] - gt[i] * prob[i]) * w;
    }
    return uni == T(0) ? T(0) : T(1) - inter / uni;
}

// Unweighted mean BCE.
template <std::floating_point T>
T bce(std::span<const T> prob, std::span<const T> gt, T eps = T(1e-7)) {
    if (prob.size() != gt.size()) throw DimensionError("bce: size mismatch");
    T sum = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const T p = std::clamp(prob[i], eps, T(1) - eps);
        sum += gt[i] * std::log(p) + (T(1) - gt[i]) * std::log(T(1) - p);
    }
    return -sum / static_cast<T>(prob.size());
}

template <std::floating_point T>
T iou(std::span<const T> prob, std::span<const T> gt) {
    if (prob.size() != gt.size()) throw DimensionError("iou: size mismatch");
    T inter = 0, uni = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        inter += gt[i] * prob[i];
        uni += gt[i] + prob[i] - gt[i] * prob[i];
    }
    return uni == T(0) ? T(0) : T(1) - inter / uni;
}

// Loss of one prediction map (one image) and its gradient w.r.t. the logits.
template <std::floating_point T>
struct TermsWithGrad {
    T bce = 0;  // weighted or plain BCE term, 0 when the mode has none
    T iou = 0;
    std::vector<T> grad;

    T total() const { return bce + iou; }
};

template <std::floating_point T>
TermsWithGrad<T> prediction_loss(std::span<const T> logits, std::span<const T> gt, std::span<const T> alpha,
                                 const LossConfig& cfg) {
    detail::require_sizes(logits, gt, alpha);
    const std::size_t n = logits.size();
    const T eps = static_cast<T>(cfg.prob_clamp_epsilon);
    const bool weighted = cfg.mode == LossMode::kWeighted;
    const bool use_bce = cfg.mode != LossMode::kIou;
    const bool use_iou = cfg.mode != LossMode::kBce;

    TermsWithGrad<T> out;
    out.grad.assign(n, T(0));
    std::vector<T> prob(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        prob[i] = sigmoid(logits[i]);
        w[i] = weighted ? T(1) + alpha[i] : T(1);
    }

    if (use_bce) {
        // Weighted: normalizer sum(alpha), pixel weight (1 + alpha). Plain: mean.
        T norm = 0;
        for (std::size_t i = 0; i < n; ++i) norm += weighted ? alpha[i] : T(1);
        T num = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const T p = prob[i];
            const T pc = std::clamp(p, eps, T(1) - eps);
            num += w[i] * (gt[i] * std::log(pc) + (T(1) - gt[i]) * std::log(T(1) - pc));
            // d/dz of -(g log p + (1-g) log(1-p)) = p - g inside the clamp, 0 outside.
            if (p > eps && p < T(1) - eps) out.grad[i] += w[i] * (p - gt[i]) / norm;
        }
        out.bce = -num / norm;
    }

    if (use_iou) {
        T inter = 0, uni = 0;
        for (std::size_t i = 0; i < n; ++i) {
            inter += gt[i] * prob[i] * w[i];
            uni += (gt[i] + prob[i] - gt[i] * prob[i]) * w[i];
        }
        if (uni != T(0)) {
            out.iou = T(1) - inter / uni;
            for (std::size_t i = 0; i < n; ++i) {
                const T d_inter = gt[i] * w[i];
                const T d_uni = (T(1) - gt[i]) * w[i];
                const T dloss_dp = -(d_inter * uni - inter * d_uni) / (uni * uni);
                out.grad[i] += dloss_dp * prob[i] * (T(1) - prob[i]);
            }
        }
    }
    return out;
}

template <std::floating_point T>
struct LossBreakdown {
    T total = 0;
    T bce1 = 0, iou1 = 0;  // first prediction
    T bce2 = 0, iou2 = 0;  // feedback prediction
};

// beta * l(P1) + (1 - beta) * l(P2), averaged over images. Inputs are
// contiguous (images x pixels) blocks. Gradients w.r.t. both logit blocks are
// written when the output vectors are given.
template <std::floating_point T>
LossBreakdown<T> supervised_loss(std::span<const T> p1_logits, std::span<const T> p2_logits,
                                 std::span<const T> gt, std::span<const T> alpha, int images,
                                 const LossConfig& cfg, std::vector<T>* grad_p1 = nullptr,
                                 std::vector<T>* grad_p2 = nullptr) {
    detail::require_sizes(p1_logits, gt, alpha);
    detail::require_sizes(p2_logits, gt, alpha);
    if (images <= 0 || gt.size() % static_cast<std::size_t>(images) != 0)
        throw DimensionError("supervised_loss: " + std::to_string(gt.size()) + " pixels do not split into " +
                             std::to_string(images) + " images");
    const std::size_t per = gt.size() / images;
    const T beta = static_cast<T>(cfg.beta);
    const T inv_n = T(1) / static_cast<T>(images);
    if (grad_p1) grad_p1->assign(gt.size(), T(0));
    if (grad_p2) grad_p2->assign(gt.size(), T(0));

    LossBreakdown<T> out;
    for (int k = 0; k < images; ++k) {
        const std::size_t off = k * per;
        const auto g = gt.subspan(off, per);
        const auto a = alpha.subspan(off, per);
        const auto t1 = prediction_loss<T>(p1_logits.subspan(off, per), g, a, cfg);
        const auto t2 = prediction_loss<T>(p2_logits.subspan(off, per), g, a, cfg);
        out.bce1 += t1.bce * inv_n;
        out.iou1 += t1.iou * inv_n;
        out.bce2 += t2.bce * inv_n;
        out.iou2 += t2.iou * inv_n;
        for (std::size_t i = 0; i < per; ++i) {
            if (grad_p1) (*grad_p1)[off + i] = beta * inv_n * t1.grad[i];
            if (grad_p2) (*grad_p2)[off + i] = (T(1) - beta) * inv_n * t2.grad[i];
        }
    }
    out.total = beta * (out.bce1 + out.iou1) + (T(1) - beta) * (out.bce2 + out.iou2);
    return out;
}

// Ground truth, edge and weight maps for a batch, each (N,1,H,W).
struct MaskBatch {
    Tensor gt;
    Tensor edge;
    Tensor alpha;
};

// Training objective on the tape: computed in double, gradients flow into both
// logit maps. The breakdown is written to *terms when given.
Var supervised_loss(const PredictionPair& pair, const MaskBatch& masks, const LossConfig& cfg,
                    LossBreakdown<double>* terms = nullptr);

}  // namespace sodkit::loss
