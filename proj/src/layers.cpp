#include "sodkit/layers.hpp"

#include <cmath>

namespace sodkit {

Conv2d::Conv2d(LayerContext& ctx, const std::string& name, int in_channels, int out_channels, int kernel,
               ops::Conv2dOptions opt, bool bias)
    : opt_(opt) {
    Tensor w(Shape{out_channels, in_channels, kernel, kernel});
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_channels) * kernel * kernel));
    for (auto& v : w.values()) v = static_cast<float>(ctx.rng.normal(0.0, stddev));
    weight_ = ctx.registry.add_parameter(name + ".weight", std::move(w), ctx.group, true);
    if (bias)
        bias_ = ctx.registry.add_parameter(name + ".bias", Tensor(Shape{out_channels, 1, 1, 1}), ctx.group,
                                           false);
}

BatchNorm2d::BatchNorm2d(LayerContext& ctx, const std::string& name, int channels) {
    const Shape s{channels, 1, 1, 1};
    gamma_ = ctx.registry.add_parameter(name + ".weight", Tensor(s, 1.0f), ctx.group, false);
    beta_ = ctx.registry.add_parameter(name + ".bias", Tensor(s), ctx.group, false);
    running_mean_ = ctx.registry.add_buffer(name + ".running_mean", Tensor(s));
    running_var_ = ctx.registry.add_buffer(name + ".running_var", Tensor(s, 1.0f));
}

Var BatchNorm2d::operator()(const Var& x, bool training) const {
    ops::BatchNormOptions opt;
    opt.training = training;
    return ops::batch_norm(x, gamma_, beta_, running_mean_.mutable_value(), running_var_.mutable_value(), opt);
}

ConvBnRelu::ConvBnRelu(LayerContext& ctx, const std::string& name, int in_channels, int out_channels,
                       int kernel, ops::Conv2dOptions opt)
    : conv_(ctx, name + ".conv", in_channels, out_channels, kernel, opt, false),
      bn_(ctx, name + ".bn", out_channels) {}

}  // namespace sodkit
