#pragma once

#include <optional>

#include "sodkit/autograd.hpp"

namespace sodkit::ops {

struct Conv2dOptions {
    int stride = 1;
    int padding = 0;
    int dilation = 1;
};

int conv_output_size(int input, int kernel, const Conv2dOptions& opt);

// weight: (out, in, kh, kw); bias: (out, 1, 1, 1).
Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, const Conv2dOptions& opt);

struct BatchNormOptions {
    bool training = false;
    float momentum = 0.1f;
    float eps = 1e-5f;
};

// Batch statistics in training mode (updating the running buffers with the
// unbiased variance), running statistics otherwise.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, const BatchNormOptions& opt);

Var relu(const Var& x);
Var add(const Var& a, const Var& b);

// Half-pixel bilinear interpolation (corners not aligned), edge-clamped.
Var resize_bilinear(const Var& x, int out_h, int out_w);

Var max_pool2d(const Var& x, int kernel, int stride, int padding);

// Mean over all elements, result shape (1,1,1,1).
Var mean(const Var& x);

// Plain tensor helpers (no tape).
Tensor sigmoid(const Tensor& x);
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

}  // namespace sodkit::ops
