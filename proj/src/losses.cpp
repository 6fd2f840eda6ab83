#include "sodkit/losses.hpp"

#include "sodkit/model.hpp"

namespace sodkit::loss {

std::string to_string(LossMode mode) {
    switch (mode) {
        case LossMode::kBce: return "bce";
        case LossMode::kIou: return "iou";
        case LossMode::kBceIou: return "bce+iou";
        case LossMode::kWeighted: return "weighted";
    }
    return "weighted";
}

LossMode parse_loss_mode(const std::string& text) {
    if (text == "bce") return LossMode::kBce;
    if (text == "iou") return LossMode::kIou;
    if (text == "bce+iou") return LossMode::kBceIou;
    if (text == "weighted" || text == "weighted(bce+iou)") return LossMode::kWeighted;
    throw ConfigError("unknown loss mode '" + text + "' (expected bce, iou, bce+iou or weighted)");
}

void LossConfig::validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("loss beta must lie in [0, 1]");
    if (!(prob_clamp_epsilon > 0.0 && prob_clamp_epsilon < 0.5))
        throw ConfigError("probability clamp epsilon must lie in (0, 0.5)");
}

Mask edge_map(const Mask& gt) {
    for (auto v : gt.values)
        if (v > 1) throw ContractError("edge_map: mask is not binary");
    Mask edge(gt.height, gt.width);
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            std::uint8_t lo = 1, hi = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    const std::uint8_t v =
                        (yy < 0 || yy >= gt.height || xx < 0 || xx >= gt.width) ? 0 : gt.at(yy, xx);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            edge.at(y, x) = hi != lo;
        }
    return edge;
}

Plane<float> alpha_weights(const Mask& edge) {
    Plane<float> alpha(edge.height, edge.width);
    for (std::size_t i = 0; i < edge.size(); ++i)
        alpha.values[i] = static_cast<float>(1.0 + sigmoid(static_cast<double>(edge.values[i])));
    return alpha;
}

Var supervised_loss(const PredictionPair& pair, const MaskBatch& masks, const LossConfig& cfg,
                    LossBreakdown<double>* terms) {
    const Shape s = pair.p1_logits.shape();
    if (pair.p2_logits.shape() != s || masks.gt.shape() != s || masks.alpha.shape() != s || s.c != 1)
        throw DimensionError("supervised_loss: predictions " + s.str() + " / " + pair.p2_logits.shape().str() +
                             " vs masks " + masks.gt.shape().str());
    auto widen = [](const Tensor& t) { return std::vector<double>(t.data(), t.data() + t.numel()); };
    const auto z1 = widen(pair.p1_logits.value());
    const auto z2 = widen(pair.p2_logits.value());
    const auto g = widen(masks.gt);
    const auto a = widen(masks.alpha);
    std::vector<double> d1, d2;
    const auto out = supervised_loss<double>(z1, z2, g, a, s.n, cfg, &d1, &d2);
    if (terms) *terms = out;

    auto narrow = [s](const std::vector<double>& v) {
        Tensor t(s);
        for (std::size_t i = 0; i < v.size(); ++i) t.data()[i] = static_cast<float>(v[i]);
        return t;
    };
    auto grad1 = std::make_shared<Tensor>(narrow(d1));
    auto grad2 = std::make_shared<Tensor>(narrow(d2));
    Tensor value(Shape{1, 1, 1, 1}, static_cast<float>(out.total));
    return Var::from_op(std::move(value), {pair.p1_logits, pair.p2_logits}, [grad1, grad2](Node& self) {
        const float seed = self.grad.data()[0];
        const Tensor* grads[2] = {grad1.get(), grad2.get()};
        for (int k = 0; k < 2; ++k) {
            Node* in = self.inputs[k].get();
            if (!in->requires_grad) continue;
            float* dst = in->grad_buffer().data();
            const float* src = grads[k]->data();
            for (std::size_t i = 0; i < grads[k]->numel(); ++i) dst[i] += seed * src[i];
        }
    });
}

}  // namespace sodkit::loss
