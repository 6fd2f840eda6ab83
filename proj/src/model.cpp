#include "sodkit/model.hpp"

#include <cmath>
#include <filesystem>

#include "sodkit/archive.hpp"
#include "sodkit/errors.hpp"

namespace sodkit {

std::string to_string(EncoderKind kind) {
    return kind == EncoderKind::kTiny ? "tiny" : "resnet50-pretrained";
}

EncoderKind parse_encoder_kind(const std::string& text) {
    if (text == "tiny") return EncoderKind::kTiny;
    if (text == "resnet50-pretrained" || text == "resnet50") return EncoderKind::kResNet50Pretrained;
    throw ConfigError("unknown encoder kind '" + text + "' (expected tiny or resnet50-pretrained)");
}

void ModelConfig::validate() const {
    if (encoder.input_height <= 0 || encoder.input_width <= 0 || encoder.input_height % 32 != 0 ||
        encoder.input_width % 32 != 0)
        throw ConfigError("input size must be positive multiples of 32, got " +
                          std::to_string(encoder.input_height) + "x" + std::to_string(encoder.input_width));
    for (int c : encoder.side_channels)
        if (c <= 0) throw ConfigError("side channel counts must be positive");
    if (encoder.kind == EncoderKind::kResNet50Pretrained && encoder.side_channels != kResNet50SideChannels)
        throw ConfigError("resnet50-pretrained requires side channels 256,512,1024,2048");
    if (mre.unified_channels <= 0) throw ConfigError("unified_channels must be positive");
    for (std::size_t i = 0; i < mre.rates.size(); ++i) {
        const auto& r = mre.rates[i];
        if (r[0] < 1 || !(r[0] < r[1] && r[1] < r[2]))
            throw ConfigError("dilation rates for side " + std::to_string(i + 2) +
                              " must be >= 1 and strictly increasing");
    }
}

bool ModelConfig::compatible_with(const ModelConfig& other) const {
    return encoder.kind == other.encoder.kind && encoder.side_channels == other.encoder.side_channels &&
           encoder.input_height == other.encoder.input_height &&
           encoder.input_width == other.encoder.input_width && mre == other.mre && use_mre == other.use_mre;
}

int effective_extent(int rate) {
    if (rate < 1) throw ContractError("dilation rate must be >= 1, got " + std::to_string(rate));
    return 2 * rate + 1;
}

// ---------------------------------------------------------------------------
// Encoders

TinyEncoder::TinyEncoder(LayerContext& ctx, const std::array<int, 4>& channels)
    : stem_(ctx, "encoder.stem", 3, channels[0], 3, {2, 1, 1}) {
    int in = channels[0];
    for (int i = 0; i < 4; ++i) {
        const std::string name = "encoder.stage" + std::to_string(i + 1);
        stages_.push_back(Stage{ConvBnRelu(ctx, name + ".down", in, channels[i], 3, {2, 1, 1}),
                                ConvBnRelu(ctx, name + ".refine", channels[i], channels[i], 3, {1, 1, 1})});
        in = channels[i];
    }
}

SideFeatures TinyEncoder::forward(const Var& images, bool training) const {
    SideFeatures out;
    Var x = stem_(images, training);
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        x = stages_[i].refine(stages_[i].down(x, training), training);
        out.maps[i] = x;
    }
    return out;
}

ResNet50Encoder::ResNet50Encoder(LayerContext& ctx)
    : conv1_(ctx, "encoder.conv1", 3, 64, 7, {2, 3, 1}, false), bn1_(ctx, "encoder.bn1", 64) {
    constexpr std::array<int, 4> planes{64, 128, 256, 512};
    constexpr std::array<int, 4> blocks{3, 4, 6, 3};
    int in = 64;
    for (int l = 0; l < 4; ++l) {
        const int width = planes[l];
        const int out = width * 4;
        for (int b = 0; b < blocks[l]; ++b) {
            const std::string name = "encoder.layer" + std::to_string(l + 1) + "." + std::to_string(b);
            const int stride = (b == 0 && l > 0) ? 2 : 1;
            Bottleneck blk{Conv2d(ctx, name + ".conv1", in, width, 1, {}, false),
                           BatchNorm2d(ctx, name + ".bn1", width),
                           Conv2d(ctx, name + ".conv2", width, width, 3, {stride, 1, 1}, false),
                           BatchNorm2d(ctx, name + ".bn2", width),
                           Conv2d(ctx, name + ".conv3", width, out, 1, {}, false),
                           BatchNorm2d(ctx, name + ".bn3", out),
                           std::nullopt,
                           std::nullopt};
            if (b == 0) {
                blk.down_conv.emplace(ctx, name + ".downsample.0", in, out, 1, ops::Conv2dOptions{stride, 0, 1},
                                      false);
                blk.down_bn.emplace(ctx, name + ".downsample.1", out);
            }
            layers_[l].push_back(std::move(blk));
            in = out;
        }
    }
}

Var ResNet50Encoder::bottleneck(const Bottleneck& b, const Var& x, bool training) const {
    Var y = ops::relu(b.bn1(b.conv1(x), training));
    y = ops::relu(b.bn2(b.conv2(y), training));
    y = b.bn3(b.conv3(y), training);
    const Var identity = b.down_conv ? (*b.down_bn)((*b.down_conv)(x), training) : x;
    return ops::relu(ops::add(y, identity));
}

SideFeatures ResNet50Encoder::forward(const Var& images, bool training) const {
    Var x = ops::relu(bn1_(conv1_(images), training));
    x = ops::max_pool2d(x, 3, 2, 1);
    SideFeatures out;
    for (int l = 0; l < 4; ++l) {
        for (const auto& blk : layers_[l]) x = bottleneck(blk, x, training);
        out.maps[l] = x;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Decoder blocks

MultiReceptiveBlock::MultiReceptiveBlock(LayerContext& ctx, const std::string& name, int in_channels,
                                         int unified_channels, const std::array<int, 3>& rates, bool enabled)
    : reduce_(ctx, name + ".reduce", in_channels, unified_channels, 1, {}, true) {
    if (!enabled) return;
    for (int k = 0; k < 3; ++k) {
        const int r = rates[k];
        branches_.emplace_back(ctx, name + ".branch" + std::to_string(k), unified_channels, unified_channels, 3,
                               ops::Conv2dOptions{1, r, r}, true);
    }
    fuse_.emplace(ctx, name + ".fuse", unified_channels, unified_channels, 3, ops::Conv2dOptions{1, 1, 1}, true);
}

Var MultiReceptiveBlock::branch(int index, const Var& reduced) const { return branches_.at(index)(reduced); }

Var MultiReceptiveBlock::forward(const Var& side) const {
    const Var reduced = reduce_(side);
    if (!enabled()) return reduced;
    Var sum = branches_[0](reduced);
    for (std::size_t k = 1; k < branches_.size(); ++k) sum = ops::add(sum, branches_[k](reduced));
    return (*fuse_)(sum);
}

FusionBlock::FusionBlock(LayerContext& ctx, const std::string& name, int channels)
    : channels_(channels), block_(ctx, name, channels, channels, 3, {1, 1, 1}) {}

Var FusionBlock::forward(const Var& fine, const Var& coarse, bool training) const {
    if (fine.shape().c != channels_ || coarse.shape().c != channels_)
        throw DimensionError("pair fusion expects " + std::to_string(channels_) + " channels, got " +
                             std::to_string(fine.shape().c) + " and " + std::to_string(coarse.shape().c));
    if (fine.shape().n != coarse.shape().n) throw DimensionError("pair fusion: batch size mismatch");
    const Var aligned = ops::resize_bilinear(coarse, fine.shape().h, fine.shape().w);
    return block_(ops::add(fine, aligned), training);
}

FeedbackFusion::FeedbackFusion(LayerContext& ctx, const std::string& name, int channels)
    : projection_(ctx, name + ".proj", 1, channels, 1, {}, true), g_(ctx, name + ".g", channels) {}

Var FeedbackFusion::forward(const Var& feature, const Var& p1_logits, bool training) const {
    if (p1_logits.shape().c != 1) throw DimensionError("feedback expects single-channel logits");
    const Var resized = ops::resize_bilinear(p1_logits, feature.shape().h, feature.shape().w);
    return g_.transform(ops::add(feature, projection_(resized)), training);
}

PredictionHead::PredictionHead(LayerContext& ctx, const std::string& name, int channels)
    : conv_(ctx, name, channels, 1, 1, {}, true) {}

Var PredictionHead::forward(const Var& feature, int out_h, int out_w) const {
    return ops::resize_bilinear(conv_(feature), out_h, out_w);
}

ParallelFusion::ParallelFusion(LayerContext& ctx, const std::string& name, int channels)
    : channels_(channels),
      fuse_a_(ctx, name + ".fuse_a", channels),
      fuse_b_(ctx, name + ".fuse_b", channels),
      fuse_c_(ctx, name + ".fuse_c", channels),
      head1_(ctx, name + ".head1", channels),
      feedback_a_(ctx, name + ".feedback_a", channels),
      feedback_b_(ctx, name + ".feedback_b", channels),
      fuse_c2_(ctx, name + ".fuse_c2", channels),
      head2_(ctx, name + ".head2", channels) {}

PredictionPair ParallelFusion::forward(const SideFeatures& e, int out_h, int out_w, bool training) const {
    for (const auto& m : e.maps)
        if (m.shape().c != channels_)
            throw DimensionError("parallel fusion expects " + std::to_string(channels_) + " channels, got " +
                                 std::to_string(m.shape().c));
    const Var a = fuse_a_.forward(e.maps[0], e.maps[1], training);
    const Var b = fuse_b_.forward(e.maps[2], e.maps[3], training);
    const Var c = fuse_c_.forward(a, b, training);
    PredictionPair out;
    out.p1_logits = head1_.forward(c, out_h, out_w);
    const Var a2 = feedback_a_.forward(a, out.p1_logits, training);
    const Var b2 = feedback_b_.forward(b, out.p1_logits, training);
    const Var c2 = fuse_c2_.forward(a2, b2, training);
    out.p2_logits = head2_.forward(c2, out_h, out_w);
    return out;
}

// ---------------------------------------------------------------------------
// Full network

SaliencyNet::SaliencyNet(ModelConfig config, WeightSource source) : config_(std::move(config)) {
    config_.validate();
    Rng rng(config_.seed);
    LayerContext backbone{registry_, rng, ParamGroup::kBackbone};
    if (config_.encoder.kind == EncoderKind::kTiny)
        encoder_ = std::make_unique<TinyEncoder>(backbone, config_.encoder.side_channels);
    else
        encoder_ = std::make_unique<ResNet50Encoder>(backbone);

    LayerContext branch{registry_, rng, ParamGroup::kBranch};
    const int unified = config_.mre.unified_channels;
    for (int i = 0; i < 4; ++i)
        mre_.emplace_back(branch, "mre." + std::to_string(i + 2), config_.encoder.side_channels[i], unified,
                          config_.mre.rates[i], config_.use_mre);
    pfs_ = std::make_unique<ParallelFusion>(branch, "pfs", unified);

    if (source == WeightSource::kConfigured && config_.encoder.kind == EncoderKind::kResNet50Pretrained) {
        if (config_.encoder.weights_path.empty())
            throw ConfigError("resnet50-pretrained encoder requested but no weights path configured");
        if (!std::filesystem::exists(config_.encoder.weights_path))
            throw ConfigError("pretrained weights not found: " + config_.encoder.weights_path);
        load_encoder_weights(registry_, config_.encoder.weights_path);
    }
}

SideFeatures SaliencyNet::encode(const Var& images) const {
    const Shape s = images.shape();
    if (s.n <= 0 || s.c != 3) throw DimensionError("encoder expects (N,3,H,W) images, got " + s.str());
    if (s.h <= 0 || s.w <= 0 || s.h % 32 != 0 || s.w % 32 != 0)
        throw DimensionError("image height and width must be multiples of 32, got " + s.str());
    return encoder_->forward(images, training_);
}

SideFeatures SaliencyNet::enhance(const SideFeatures& sides) const {
    SideFeatures out;
    for (int i = 0; i < 4; ++i) out.maps[i] = mre_[i].forward(sides.maps[i]);
    return out;
}

PredictionPair SaliencyNet::decode(const SideFeatures& enhanced, int out_h, int out_w) const {
    return pfs_->forward(enhanced, out_h, out_w, training_);
}

PredictionPair SaliencyNet::forward(const Var& images) const {
    return decode(enhance(encode(images)), images.shape().h, images.shape().w);
}

void load_encoder_weights(ParameterRegistry& registry, const std::string& path) {
    TensorArchive archive;
    try {
        archive = read_archive(path);
    } catch (const DataError& e) {
        throw ConfigError(std::string("cannot read pretrained weights: ") + e.what());
    }
    const auto index = archive.tensor_index();
    auto assign = [&](const std::string& name, Var var) {
        const auto it = index.find(name);
        if (it == index.end()) throw ConfigError("pretrained weights missing tensor " + name);
        if (it->second->shape() != var.shape())
            throw ConfigError("pretrained tensor " + name + " has shape " + it->second->shape().str() +
                              ", expected " + var.shape().str());
        var.mutable_value() = *it->second;
    };
    for (const auto& p : registry.parameters())
        if (p.name.starts_with("encoder.")) assign(p.name, p.var);
    for (const auto& b : registry.buffers())
        if (b.name.starts_with("encoder.")) assign(b.name, b.var);
}

Tensor combine_predictions(const PredictionPair& pair) {
    if (pair.p1_logits.shape() != pair.p2_logits.shape())
        throw DimensionError("prediction shapes differ: " + pair.p1_logits.shape().str() + " vs " +
                             pair.p2_logits.shape().str());
    const Tensor& a = pair.p1_logits.value();
    const Tensor& b = pair.p2_logits.value();
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double sa = 1.0 / (1.0 + std::exp(-static_cast<double>(a.data()[i])));
        const double sb = 1.0 / (1.0 + std::exp(-static_cast<double>(b.data()[i])));
        out.data()[i] = static_cast<float>(0.5 * (sa + sb));
    }
    return out;
}

}  // namespace sodkit
