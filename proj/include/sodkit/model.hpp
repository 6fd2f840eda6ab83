#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sodkit/layers.hpp"

namespace sodkit {

enum class EncoderKind { kTiny, kResNet50Pretrained };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& text);

inline constexpr std::array<int, 4> kResNet50SideChannels{256, 512, 1024, 2048};
inline constexpr std::array<int, 4> kSideStrides{4, 8, 16, 32};

struct EncoderConfig {
    EncoderKind kind = EncoderKind::kTiny;
    std::array<int, 4> side_channels{16, 32, 64, 128};
    int input_height = 352;
    int input_width = 352;
    // Archive with "encoder.*" tensors; required for the pretrained ResNet-50.
    std::string weights_path;

    bool operator==(const EncoderConfig&) const = default;
};

struct MreConfig {
    int unified_channels = 128;
    // Dilation rates for sides 2..5.
    std::array<std::array<int, 3>, 4> rates{{{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 3, 5}}};

    bool operator==(const MreConfig&) const = default;
};

struct ModelConfig {
    EncoderConfig encoder;
    MreConfig mre;
    bool use_mre = true;
    std::uint64_t seed = 0;

    int fusion_channels() const { return mre.unified_channels; }

    // Throws ConfigError.
    void validate() const;

    // Same architecture and input geometry; seed and weight source do not matter
    // once parameters are restored.
    bool compatible_with(const ModelConfig& other) const;
};

// Extent of a 3x3 kernel at the given dilation: 2 * rate + 1.
int effective_extent(int rate);

// Encoder outputs at strides 4, 8, 16, 32.
struct SideFeatures {
    std::array<Var, 4> maps;
};

struct PredictionPair {
    Var p1_logits;
    Var p2_logits;
};

class Encoder {
  public:
    virtual ~Encoder() = default;
    virtual SideFeatures forward(const Var& images, bool training) const = 0;
};

// Conv stem at stride 2 followed by four stride-2 stages.
class TinyEncoder final : public Encoder {
  public:
    TinyEncoder(LayerContext& ctx, const std::array<int, 4>& channels);
    SideFeatures forward(const Var& images, bool training) const override;

  private:
    struct Stage {
        ConvBnRelu down;
        ConvBnRelu refine;
    };
    ConvBnRelu stem_;
    std::vector<Stage> stages_;
};

// torchvision-layout ResNet-50 (stride on the 3x3 conv of each bottleneck).
// Parameter names follow torchvision under the "encoder." prefix.
class ResNet50Encoder final : public Encoder {
  public:
    explicit ResNet50Encoder(LayerContext& ctx);
    SideFeatures forward(const Var& images, bool training) const override;

  private:
    struct Bottleneck {
        Conv2d conv1;
        BatchNorm2d bn1;
        Conv2d conv2;
        BatchNorm2d bn2;
        Conv2d conv3;
        BatchNorm2d bn3;
        std::optional<Conv2d> down_conv;
        std::optional<BatchNorm2d> down_bn;
    };
    Var bottleneck(const Bottleneck& b, const Var& x, bool training) const;

    Conv2d conv1_;
    BatchNorm2d bn1_;
    std::array<std::vector<Bottleneck>, 4> layers_;
};

// 1x1 reduction to the unified width, three parallel dilated 3x3 convs summed
// element-wise, then a 3x3 fusion conv. All convs are linear with bias.
// Without the dilated group (ablation) only the reduction remains.
class MultiReceptiveBlock {
  public:
    MultiReceptiveBlock(LayerContext& ctx, const std::string& name, int in_channels, int unified_channels,
                        const std::array<int, 3>& rates, bool enabled);

    Var forward(const Var& side) const;
    Var reduce(const Var& side) const { return reduce_(side); }
    // One dilated branch applied to an already-reduced map.
    Var branch(int index, const Var& reduced) const;
    bool enabled() const { return !branches_.empty(); }
    const Conv2d& reduction() const { return reduce_; }
    const Conv2d& branch_conv(int index) const { return branches_.at(index); }
    const Conv2d& fusion() const { return *fuse_; }

  private:
    Conv2d reduce_;
    std::vector<Conv2d> branches_;
    std::optional<Conv2d> fuse_;
};

// G(f_a + resize(f_b)): the coarser input is bilinearly resized to the finer
// one, added, then 3x3 conv -> BN -> ReLU.
class FusionBlock {
  public:
    FusionBlock(LayerContext& ctx, const std::string& name, int channels);

    Var forward(const Var& fine, const Var& coarse, bool training) const;
    Var transform(const Var& x, bool training) const { return block_(x, training); }

  private:
    int channels_;
    ConvBnRelu block_;
};

// First-prediction logits resized to the feature, projected by a 1x1 conv,
// added to the feature, then passed through G.
class FeedbackFusion {
  public:
    FeedbackFusion(LayerContext& ctx, const std::string& name, int channels);

    Var forward(const Var& feature, const Var& p1_logits, bool training) const;
    Var transform(const Var& x, bool training) const { return g_.transform(x, training); }
    const Conv2d& projection() const { return projection_; }

  private:
    Conv2d projection_;
    FusionBlock g_;
};

// 1x1 conv to one channel, bilinear upsample to the input size. Raw logits.
class PredictionHead {
  public:
    PredictionHead(LayerContext& ctx, const std::string& name, int channels);

    Var forward(const Var& feature, int out_h, int out_w) const;
    const Conv2d& conv() const { return conv_; }

  private:
    Conv2d conv_;
};

// Adjacent-pair fusion tree with a feedback pass:
//   A = G(E2, E3), B = G(E4, E5), C = G(A, B), P1 = head1(C)
//   A' = fb(A, P1), B' = fb(B, P1), C' = G(A', B'), P2 = head2(C')
class ParallelFusion {
  public:
    ParallelFusion(LayerContext& ctx, const std::string& name, int channels);

    PredictionPair forward(const SideFeatures& enhanced, int out_h, int out_w, bool training) const;

  private:
    int channels_;
    FusionBlock fuse_a_, fuse_b_, fuse_c_;
    PredictionHead head1_;
    FeedbackFusion feedback_a_, feedback_b_;
    FusionBlock fuse_c2_;
    PredictionHead head2_;
};

enum class WeightSource {
    kConfigured,  // random init, then pretrained encoder weights if the config asks for them
    kRandom,      // random init only (restoring from a checkpoint, shape tests)
};

class SaliencyNet {
  public:
    explicit SaliencyNet(ModelConfig config, WeightSource source = WeightSource::kConfigured);
    SaliencyNet(const SaliencyNet&) = delete;
    SaliencyNet& operator=(const SaliencyNet&) = delete;

    // images: (N, 3, H, W) with H, W multiples of 32.
    SideFeatures encode(const Var& images) const;
    SideFeatures enhance(const SideFeatures& sides) const;
    PredictionPair decode(const SideFeatures& enhanced, int out_h, int out_w) const;
    PredictionPair forward(const Var& images) const;

    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }

    const ModelConfig& config() const { return config_; }
    ParameterRegistry& registry() { return registry_; }
    const ParameterRegistry& registry() const { return registry_; }
    const MultiReceptiveBlock& mre(int side) const { return mre_.at(side - 2); }

  private:
    ModelConfig config_;
    ParameterRegistry registry_;
    std::unique_ptr<Encoder> encoder_;
    std::vector<MultiReceptiveBlock> mre_;
    std::unique_ptr<ParallelFusion> pfs_;
    bool training_ = false;
};

// Loads every "encoder.*" parameter and buffer from the archive. Throws
// ConfigError for missing names or shape mismatches.
void load_encoder_weights(ParameterRegistry& registry, const std::string& path);

// Mean of the two sigmoid maps, in [0, 1]. Shape (N,1,H,W).
Tensor combine_predictions(const PredictionPair& pair);

}  // namespace sodkit
