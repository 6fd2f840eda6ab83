#pragma once

#include <optional>
#include <string>

#include "sodkit/ops.hpp"
#include "sodkit/params.hpp"
#include "sodkit/rng.hpp"

namespace sodkit {

// Where new layers register their tensors and draw their initial weights.
struct LayerContext {
    ParameterRegistry& registry;
    Rng& rng;
    ParamGroup group;
};

// Kaiming-normal weights (fan-in, ReLU gain), zero bias.
class Conv2d {
  public:
    Conv2d(LayerContext& ctx, const std::string& name, int in_channels, int out_channels, int kernel,
           ops::Conv2dOptions opt, bool bias);

    Var operator()(const Var& x) const { return ops::conv2d(x, weight_, bias_, opt_); }

    const Var& weight() const { return weight_; }
    const std::optional<Var>& bias() const { return bias_; }
    const ops::Conv2dOptions& options() const { return opt_; }
    int in_channels() const { return weight_.shape().c; }
    int out_channels() const { return weight_.shape().n; }

  private:
    Var weight_;
    std::optional<Var> bias_;
    ops::Conv2dOptions opt_;
};

class BatchNorm2d {
  public:
    BatchNorm2d(LayerContext& ctx, const std::string& name, int channels);

    Var operator()(const Var& x, bool training) const;

  private:
    Var gamma_, beta_;
    mutable Var running_mean_, running_var_;
};

// conv -> batch norm -> ReLU, conv without bias.
class ConvBnRelu {
  public:
    ConvBnRelu(LayerContext& ctx, const std::string& name, int in_channels, int out_channels, int kernel,
               ops::Conv2dOptions opt);

    Var operator()(const Var& x, bool training) const { return ops::relu(bn_(conv_(x), training)); }

    const Conv2d& conv() const { return conv_; }

  private:
    Conv2d conv_;
    BatchNorm2d bn_;
};

}  // namespace sodkit
