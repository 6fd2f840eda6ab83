#include "sodkit/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "sodkit/errors.hpp"

namespace sodkit::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
    int in_c, in_h, in_w;
    int k_h, k_w;
    int out_h, out_w;
    Conv2dOptions opt;

    int rows() const { return in_c * k_h * k_w; }
    int cols() const { return out_h * out_w; }
    bool pointwise() const {
        return k_h == 1 && k_w == 1 && opt.stride == 1 && opt.padding == 0;
    }
};

void im2col(const float* x, const ConvGeometry& g, float* col) {
    const int s = g.opt.stride, p = g.opt.padding, d = g.opt.dilation;
    for (int c = 0; c < g.in_c; ++c) {
        const float* plane = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int i = 0; i < g.k_h; ++i) {
            for (int j = 0; j < g.k_w; ++j) {
                float* row = col + (static_cast<std::size_t>(c) * g.k_h * g.k_w + i * g.k_w + j) * g.cols();
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * s - p + i * d;
                    float* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= g.in_h) {
                        std::fill(dst, dst + g.out_w, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(iy) * g.in_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * s - p + j * d;
                        dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* col, const ConvGeometry& g, float* x) {
    const int s = g.opt.stride, p = g.opt.padding, d = g.opt.dilation;
    for (int c = 0; c < g.in_c; ++c) {
        float* plane = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int i = 0; i < g.k_h; ++i) {
            for (int j = 0; j < g.k_w; ++j) {
                const float* row =
                    col + (static_cast<std::size_t>(c) * g.k_h * g.k_w + i * g.k_w + j) * g.cols();
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * s - p + i * d;
                    if (iy < 0 || iy >= g.in_h) continue;
                    const float* src = row + oy * g.out_w;
                    float* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * s - p + j * d;
                        if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

struct AxisWeights {
    std::vector<int> i0, i1;
    std::vector<float> l0, l1;
};

AxisWeights axis_weights(int in, int out) {
    AxisWeights a;
    a.i0.resize(out);
    a.i1.resize(out);
    a.l0.resize(out);
    a.l1.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int i0 = static_cast<int>(src);
        if (i0 > in - 1) i0 = in - 1;
        const int i1 = std::min(i0 + 1, in - 1);
        const float lambda = static_cast<float>(src - i0);
        a.i0[o] = i0;
        a.i1[o] = i1;
        a.l1[o] = lambda;
        a.l0[o] = 1.0f - lambda;
    }
    return a;
}

void require_rank4_positive(const Shape& s, const char* op) {
    if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
        throw DimensionError(std::string(op) + ": empty input " + s.str());
}

}  // namespace

int conv_output_size(int input, int kernel, const Conv2dOptions& opt) {
    return (input + 2 * opt.padding - opt.dilation * (kernel - 1) - 1) / opt.stride + 1;
}

Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, const Conv2dOptions& opt) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    require_rank4_positive(xs, "conv2d");
    if (xs.c != ws.c)
        throw DimensionError("conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                             std::to_string(ws.c));
    if (bias && bias->shape() != Shape{ws.n, 1, 1, 1})
        throw DimensionError("conv2d: bias shape " + bias->shape().str());
    if (opt.stride < 1 || opt.dilation < 1 || opt.padding < 0)
        throw ContractError("conv2d: invalid stride/dilation/padding");

    ConvGeometry g{xs.c, xs.h, xs.w, ws.h, ws.w, conv_output_size(xs.h, ws.h, opt),
                   conv_output_size(xs.w, ws.w, opt), opt};
    if (g.out_h <= 0 || g.out_w <= 0)
        throw DimensionError("conv2d: input " + xs.str() + " too small for kernel " + ws.str());

    Tensor out(Shape{xs.n, ws.n, g.out_h, g.out_w});
    std::vector<float> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());
    ConstMapMat wmat(weight.value().data(), ws.n, g.rows());
    for (int n = 0; n < xs.n; ++n) {
        const float* src = x.value().plane(n, 0);
        if (!g.pointwise()) {
            im2col(src, g, col.data());
            src = col.data();
        }
        MapMat omat(out.plane(n, 0), ws.n, g.cols());
        omat.noalias() = wmat * ConstMapMat(src, g.rows(), g.cols());
        if (bias) {
            const float* b = bias->value().data();
            for (int o = 0; o < ws.n; ++o) omat.row(o).array() += b[o];
        }
    }

    std::vector<Var> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    const bool has_bias = bias.has_value();
    return Var::from_op(std::move(out), std::move(inputs), [g, has_bias](Node& self) {
        Node* xn = self.inputs[0].get();
        Node* wn = self.inputs[1].get();
        const Tensor& gout = self.grad;
        const int batch = gout.shape().n;
        const int out_c = gout.shape().c;
        std::vector<float> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());
        std::vector<float> dcol;
        ConstMapMat wmat(wn->value.data(), out_c, g.rows());
        for (int n = 0; n < batch; ++n) {
            ConstMapMat go(gout.plane(n, 0), out_c, g.cols());
            const float* src = xn->value.plane(n, 0);
            if (wn->requires_grad) {
                if (!g.pointwise()) {
                    im2col(src, g, col.data());
                    src = col.data();
                }
                MapMat dw(wn->grad_buffer().data(), out_c, g.rows());
                dw.noalias() += go * ConstMapMat(src, g.rows(), g.cols()).transpose();
            }
            if (xn->requires_grad) {
                float* dx = xn->grad_buffer().plane(n, 0);
                if (g.pointwise()) {
                    MapMat(dx, g.rows(), g.cols()).noalias() += wmat.transpose() * go;
                } else {
                    dcol.resize(static_cast<std::size_t>(g.rows()) * g.cols());
                    MapMat(dcol.data(), g.rows(), g.cols()).noalias() = wmat.transpose() * go;
                    col2im_add(dcol.data(), g, dx);
                }
            }
        }
        if (has_bias) {
            Node* bn = self.inputs[2].get();
            if (bn->requires_grad) {
                float* db = bn->grad_buffer().data();
                for (int n = 0; n < batch; ++n)
                    for (int o = 0; o < out_c; ++o) {
                        const float* p = gout.plane(n, o);
                        double s = 0.0;
                        for (int i = 0; i < g.cols(); ++i) s += p[i];
                        db[o] += static_cast<float>(s);
                    }
            }
        }
    });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean, Tensor& running_var,
               const BatchNormOptions& opt) {
    const Shape s = x.shape();
    require_rank4_positive(s, "batch_norm");
    const Shape cs{s.c, 1, 1, 1};
    if (gamma.shape() != cs || beta.shape() != cs || running_mean.shape() != cs || running_var.shape() != cs)
        throw DimensionError("batch_norm: parameter shapes do not match " + std::to_string(s.c) + " channels");

    const std::size_t plane = s.plane();
    const std::size_t count = static_cast<std::size_t>(s.n) * plane;
    Tensor out(s);
    auto xhat = std::make_shared<Tensor>(s);
    auto inv_std = std::make_shared<std::vector<float>>(s.c);

    for (int c = 0; c < s.c; ++c) {
        double mu, var;
        if (opt.training) {
            double acc = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const float* p = x.value().plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            }
            mu = acc / count;
            double sq = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const float* p = x.value().plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
            }
            var = sq / count;
            const double unbiased = count > 1 ? sq / (count - 1) : var;
            float* rm = running_mean.data();
            float* rv = running_var.data();
            rm[c] = static_cast<float>((1.0 - opt.momentum) * rm[c] + opt.momentum * mu);
            rv[c] = static_cast<float>((1.0 - opt.momentum) * rv[c] + opt.momentum * unbiased);
        } else {
            mu = running_mean.data()[c];
            var = running_var.data()[c];
        }
        const float is = static_cast<float>(1.0 / std::sqrt(var + opt.eps));
        (*inv_std)[c] = is;
        const float g = gamma.value().data()[c];
        const float b = beta.value().data()[c];
        const float m = static_cast<float>(mu);
        for (int n = 0; n < s.n; ++n) {
            const float* p = x.value().plane(n, c);
            float* xh = xhat->plane(n, c);
            float* o = out.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - m) * is;
                o[i] = g * xh[i] + b;
            }
        }
    }

    const bool training = opt.training;
    return Var::from_op(std::move(out), {x, gamma, beta}, [xhat, inv_std, training](Node& self) {
        Node* xn = self.inputs[0].get();
        Node* gn = self.inputs[1].get();
        Node* bn = self.inputs[2].get();
        const Tensor& gy = self.grad;
        const Shape s = gy.shape();
        const std::size_t plane = s.plane();
        const double count = static_cast<double>(s.n) * plane;
        for (int c = 0; c < s.c; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const float* d = gy.plane(n, c);
                const float* xh = xhat->plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += d[i];
                    sum_dy_xhat += static_cast<double>(d[i]) * xh[i];
                }
            }
            if (gn->requires_grad) gn->grad_buffer().data()[c] += static_cast<float>(sum_dy_xhat);
            if (bn->requires_grad) bn->grad_buffer().data()[c] += static_cast<float>(sum_dy);
            if (!xn->requires_grad) continue;
            const float scale = gn->value.data()[c] * (*inv_std)[c];
            const float mean_dy = static_cast<float>(sum_dy / count);
            const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
            for (int n = 0; n < s.n; ++n) {
                const float* d = gy.plane(n, c);
                const float* xh = xhat->plane(n, c);
                float* dx = xn->grad_buffer().plane(n, c);
                if (training) {
                    for (std::size_t i = 0; i < plane; ++i)
                        dx[i] += scale * (d[i] - mean_dy - xh[i] * mean_dy_xhat);
                } else {
                    for (std::size_t i = 0; i < plane; ++i) dx[i] += scale * d[i];
                }
            }
        }
    });
}

Var relu(const Var& x) {
    Tensor out(x.shape());
    const float* src = x.value().data();
    float* dst = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) dst[i] = src[i] < 0.0f ? 0.0f : src[i];  // NaN passes through
    return Var::from_op(std::move(out), {x}, [](Node& self) {
        Node* xn = self.inputs[0].get();
        const float* y = self.value.data();
        const float* g = self.grad.data();
        float* dx = xn->grad_buffer().data();
        for (std::size_t i = 0; i < self.value.numel(); ++i)
            if (y[i] > 0.0f) dx[i] += g[i];
    });
}

Var add(const Var& a, const Var& b) {
    if (a.shape() != b.shape()) throw DimensionError("add: " + a.shape().str() + " vs " + b.shape().str());
    Tensor out = a.value();
    out.add_(b.value());
    return Var::from_op(std::move(out), {a, b}, [](Node& self) {
        for (auto& in : self.inputs)
            if (in->requires_grad) in->grad_buffer().add_(self.grad);
    });
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
    const Shape s = x.shape();
    require_rank4_positive(s, "resize_bilinear");
    if (out_h <= 0 || out_w <= 0) throw DimensionError("resize_bilinear: non-positive target size");
    if (s.h == out_h && s.w == out_w) return x;
    const AxisWeights ay = axis_weights(s.h, out_h);
    const AxisWeights ax = axis_weights(s.w, out_w);
    Tensor out(Shape{s.n, s.c, out_h, out_w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const float* src = x.plane(n, c);
            float* dst = out.plane(n, c);
            for (int oy = 0; oy < out_h; ++oy) {
                const float* r0 = src + static_cast<std::size_t>(ay.i0[oy]) * s.w;
                const float* r1 = src + static_cast<std::size_t>(ay.i1[oy]) * s.w;
                const float wy0 = ay.l0[oy], wy1 = ay.l1[oy];
                for (int ox = 0; ox < out_w; ++ox) {
                    const int x0 = ax.i0[ox], x1 = ax.i1[ox];
                    dst[oy * out_w + ox] = wy0 * (ax.l0[ox] * r0[x0] + ax.l1[ox] * r0[x1]) +
                                           wy1 * (ax.l0[ox] * r1[x0] + ax.l1[ox] * r1[x1]);
                }
            }
        }
    return out;
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    const Shape s = x.shape();
    if (s.h == out_h && s.w == out_w) return x;
    Tensor out = resize_bilinear(x.value(), out_h, out_w);
    return Var::from_op(std::move(out), {x}, [s, out_h, out_w](Node& self) {
        Node* xn = self.inputs[0].get();
        const AxisWeights ay = axis_weights(s.h, out_h);
        const AxisWeights ax = axis_weights(s.w, out_w);
        Tensor& dx = xn->grad_buffer();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const float* g = self.grad.plane(n, c);
                float* d = dx.plane(n, c);
                for (int oy = 0; oy < out_h; ++oy) {
                    float* r0 = d + static_cast<std::size_t>(ay.i0[oy]) * s.w;
                    float* r1 = d + static_cast<std::size_t>(ay.i1[oy]) * s.w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const float v = g[oy * out_w + ox];
                        const int x0 = ax.i0[ox], x1 = ax.i1[ox];
                        r0[x0] += ay.l0[oy] * ax.l0[ox] * v;
                        r0[x1] += ay.l0[oy] * ax.l1[ox] * v;
                        r1[x0] += ay.l1[oy] * ax.l0[ox] * v;
                        r1[x1] += ay.l1[oy] * ax.l1[ox] * v;
                    }
                }
            }
    });
}

Var max_pool2d(const Var& x, int kernel, int stride, int padding) {
    const Shape s = x.shape();
    require_rank4_positive(s, "max_pool2d");
    const Conv2dOptions geo{stride, padding, 1};
    const int oh = conv_output_size(s.h, kernel, geo);
    const int ow = conv_output_size(s.w, kernel, geo);
    if (oh <= 0 || ow <= 0) throw DimensionError("max_pool2d: input " + s.str() + " too small");
    Tensor out(Shape{s.n, s.c, oh, ow});
    auto argmax = std::make_shared<std::vector<int>>(out.numel());
    std::size_t k = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const float* src = x.value().plane(n, c);
            float* dst = out.plane(n, c);
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox, ++k) {
                    float best = -std::numeric_limits<float>::infinity();
                    int best_idx = -1;
                    for (int i = 0; i < kernel; ++i) {
                        const int iy = oy * stride - padding + i;
                        if (iy < 0 || iy >= s.h) continue;
                        for (int j = 0; j < kernel; ++j) {
                            const int ix = ox * stride - padding + j;
                            if (ix < 0 || ix >= s.w) continue;
                            const float v = src[iy * s.w + ix];
                            if (best_idx < 0 || (!std::isnan(best) && (v > best || std::isnan(v)))) {  // NaN wins
                                best = v;
                                best_idx = iy * s.w + ix;
                            }
                        }
                    }
                    dst[oy * ow + ox] = best;
                    (*argmax)[k] = best_idx;
                }
        }
    return Var::from_op(std::move(out), {x}, [argmax](Node& self) {
        Node* xn = self.inputs[0].get();
        const Shape os = self.value.shape();
        Tensor& dx = xn->grad_buffer();
        std::size_t k = 0;
        for (int n = 0; n < os.n; ++n)
            for (int c = 0; c < os.c; ++c) {
                const float* g = self.grad.plane(n, c);
                float* d = dx.plane(n, c);
                for (std::size_t i = 0; i < os.plane(); ++i, ++k) d[(*argmax)[k]] += g[i];
            }
    });
}

Var mean(const Var& x) {
    const double m = x.value().sum() / static_cast<double>(x.value().numel());
    Tensor out(Shape{1, 1, 1, 1}, static_cast<float>(m));
    return Var::from_op(std::move(out), {x}, [](Node& self) {
        Node* xn = self.inputs[0].get();
        const float g = self.grad.data()[0] / static_cast<float>(xn->value.numel());
        float* dx = xn->grad_buffer().data();
        for (std::size_t i = 0; i < xn->value.numel(); ++i) dx[i] += g;
    });
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    const float* src = x.data();
    float* dst = out.data();
    for (std::size_t i = 0; i < x.numel(); ++i) dst[i] = 1.0f / (1.0f + std::exp(-src[i]));
    return out;
}

}  // namespace sodkit::ops
