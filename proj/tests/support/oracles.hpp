#pragma once

// Brute-force reference implementations, written directly from the metric and
// loss definitions without sharing code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "sodkit/metrics.hpp"
#include "sodkit/tensor.hpp"

namespace oracle {

using sodkit::Mask;
using sodkit::metrics::SaliencyMap;

inline double mae(const SaliencyMap& pred, const Mask& gt) {
    double s = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) s += std::fabs(pred.at(y, x) - (gt.at(y, x) ? 1.0 : 0.0));
    return s / (gt.height * gt.width);
}

struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion_at(const SaliencyMap& pred, const Mask& gt, double tau, bool require_positive = false) {
    Confusion c;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            const double p = pred.at(y, x);
            const bool pos = p >= tau && (!require_positive || p > 0);
            const bool g = gt.at(y, x) != 0;
            if (pos && g) ++c.tp;
            if (pos && !g) ++c.fp;
            if (!pos && g) ++c.fn;
            if (!pos && !g) ++c.tn;
        }
    return c;
}

inline double precision(const Confusion& c) {
    return c.tp + c.fp == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}
inline double recall(const Confusion& c) {
    return c.tp + c.fn == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

struct Curve {
    std::array<double, 256> precision{}, recall{};
};

inline Curve pr_curve(const SaliencyMap& pred, const Mask& gt) {
    Curve out;
    for (int k = 0; k < 256; ++k) {
        const Confusion c = confusion_at(pred, gt, k / 255.0);
        out.precision[k] = precision(c);
        out.recall[k] = recall(c);
    }
    return out;
}

inline double f_beta(double p, double r) {
    const double b2 = 0.3;
    return (b2 * p + r) == 0 ? 0.0 : (1 + b2) * p * r / (b2 * p + r);
}

inline double adaptive_f(const SaliencyMap& pred, const Mask& gt) {
    double m = 0;
    for (double v : pred.values) m += v;
    m /= static_cast<double>(pred.values.size());
    const double tau = std::min(2 * m, 1.0);
    const Confusion c = confusion_at(pred, gt, tau, true);
    return f_beta(precision(c), recall(c));
}

inline double mean_f(const std::vector<SaliencyMap>& preds, const std::vector<Mask>& gts) {
    double s = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += adaptive_f(preds[i], gts[i]);
    return s / static_cast<double>(preds.size());
}

// Dilation minus erosion with a 3x3 square, outside pixels read as 0.
inline Mask edge(const Mask& gt) {
    Mask e(gt.height, gt.width);
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            int any = 0, all = 1;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    const int v = (yy < 0 || xx < 0 || yy >= gt.height || xx >= gt.width) ? 0 : gt.at(yy, xx);
                    any |= v;
                    all &= v;
                }
            e.at(y, x) = static_cast<std::uint8_t>(any - all);
        }
    return e;
}

// Full two-prediction objective for one image, evaluated straight from the
// definitions of the weighted terms.
inline double objective(const std::vector<double>& z1, const std::vector<double>& z2, const std::vector<double>& g,
                        const std::vector<double>& a, double beta, double eps = 1e-7) {
    auto term = [&](const std::vector<double>& z) {
        double num = 0, den = 0, inter = 0, uni = 0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double p = 1.0 / (1.0 + std::exp(-z[i]));
            const double pc = std::min(std::max(p, eps), 1 - eps);
            num += (1 + a[i]) * (g[i] * std::log(pc) + (1 - g[i]) * std::log(1 - pc));
            den += a[i];
            inter += g[i] * p * (1 + a[i]);
            uni += (g[i] + p - g[i] * p) * (1 + a[i]);
        }
        const double wbce = -num / den;
        const double wiou = uni == 0 ? 0.0 : 1 - inter / uni;
        return wbce + wiou;
    };
    return beta * term(z1) + (1 - beta) * term(z2);
}

// Direct-loop convolution, (N,C,H,W) x (O,C,k,k).
inline sodkit::Tensor conv2d(const sodkit::Tensor& x, const sodkit::Tensor& w, const sodkit::Tensor* bias, int stride,
                             int pad, int dil) {
    const auto xs = x.shape(), ws = w.shape();
    const int oh = (xs.h + 2 * pad - dil * (ws.h - 1) - 1) / stride + 1;
    const int ow = (xs.w + 2 * pad - dil * (ws.w - 1) - 1) / stride + 1;
    sodkit::Tensor out(sodkit::Shape{xs.n, ws.n, oh, ow});
    for (int n = 0; n < xs.n; ++n)
        for (int o = 0; o < ws.n; ++o)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) {
                    double s = bias ? bias->at(o, 0, 0, 0) : 0.0;
                    for (int c = 0; c < xs.c; ++c)
                        for (int ky = 0; ky < ws.h; ++ky)
                            for (int kx = 0; kx < ws.w; ++kx) {
                                const int iy = y * stride - pad + ky * dil, ix = xo * stride - pad + kx * dil;
                                if (iy < 0 || ix < 0 || iy >= xs.h || ix >= xs.w) continue;
                                s += static_cast<double>(x.at(n, c, iy, ix)) * w.at(o, c, ky, kx);
                            }
                    out.at(n, o, y, xo) = static_cast<float>(s);
                }
    return out;
}

}  // namespace oracle
