#include "sodkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "sodkit/config.hpp"
#include "sodkit/errors.hpp"

namespace sodkit::train {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointFormat = "sodkit-checkpoint-1";
constexpr std::uint64_t kShuffleTag = 0x5348554646ULL;
constexpr std::uint64_t kAugmentTag = 0x4155474dULL;

}  // namespace

void TrainConfig::validate() const {
    if (!(lr_backbone >= 0.0) || !(lr_branch >= 0.0)) throw ConfigError("learning rates must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(warmup_fraction > 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup_fraction must lie in (0, 1]");
    if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
    if (device != "cpu") throw ConfigError("unsupported device '" + device + "' (only cpu is available)");
    loss.validate();
}

long steps_per_epoch(long samples, int batch_size) {
    if (samples < 1 || batch_size < 1) throw ContractError("steps_per_epoch: samples and batch_size must be >= 1");
    return (samples + batch_size - 1) / batch_size;
}

long warmup_steps(long total_steps, double fraction) {
    if (total_steps < 1) throw ContractError("warmup_steps: total_steps must be >= 1");
    const long w = std::lround(fraction * static_cast<double>(total_steps));
    return std::clamp(w, 1L, total_steps);
}

double lr_schedule(long step, long total_steps, long warmup, double peak_lr) {
    if (total_steps < 1 || warmup < 1 || warmup > total_steps)
        throw ContractError("lr_schedule: need 0 < warmup_steps <= total_steps, got " + std::to_string(warmup) +
                            " of " + std::to_string(total_steps));
    if (step < 0 || step > total_steps)
        throw ContractError("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
    if (peak_lr < 0.0) throw ContractError("lr_schedule: negative peak rate");
    if (step >= total_steps) return 0.0;
    if (step < warmup) return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
    return peak_lr * (1.0 - static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup));
}

// ---------------------------------------------------------------------------

Sgd::Sgd(ParameterRegistry& registry, double momentum, double weight_decay)
    : registry_(&registry), momentum_(momentum), weight_decay_(weight_decay) {
    for (const auto& p : registry.parameters()) buffers_.emplace_back(p.var.shape(), 0.0f);
}

void Sgd::step(double lr_backbone, double lr_branch) {
    const auto params = registry_->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const NamedParameter& p = params[i];
        const double lr = p.group == ParamGroup::kBackbone ? lr_backbone : lr_branch;
        const double wd = p.weight_decay ? weight_decay_ : 0.0;
        Var v = p.var;
        float* w = v.mutable_value().data();
        const float* g = p.var.grad().empty() ? nullptr : p.var.grad().data();
        float* buf = buffers_[i].data();
        const std::size_t n = p.var.value().numel();
        const float m = static_cast<float>(momentum_), fwd = static_cast<float>(wd), flr = static_cast<float>(lr);
        for (std::size_t k = 0; k < n; ++k) {
            const float d = (g ? g[k] : 0.0f) + fwd * w[k];
            buf[k] = m * buf[k] + d;
            w[k] -= flr * buf[k];
        }
    }
}

double clip_grad_norm(ParameterRegistry& registry, double max_norm) {
    double sq = 0.0;
    for (const auto& p : registry.parameters())
        if (!p.var.grad().empty()) sq += p.var.grad().squared_norm();
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const float scale = static_cast<float>(max_norm / (norm + 1e-6));
        for (const auto& p : registry.parameters()) {
            if (p.var.grad().empty()) continue;
            Tensor& g = p.var.node()->grad;
            for (float& x : g.values()) x *= scale;
        }
    }
    return norm;
}

std::string to_json_line(const StepRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["lr_backbone"] = r.lr_backbone;
    j["lr_branch"] = r.lr_branch;
    j["loss"] = r.terms.total;
    j["wbce1"] = r.terms.bce1;
    j["wiou1"] = r.terms.iou1;
    j["wbce2"] = r.terms.bce2;
    j["wiou2"] = r.terms.iou2;
    j["stems"] = r.stems;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint read_checkpoint(const fs::path& path) {
    Checkpoint ck;
    ck.archive = read_archive(path);
    const std::string* format = ck.archive.meta("format");
    if (!format || *format != kCheckpointFormat) throw DataError(path.string() + " is not a sodkit checkpoint");
    RunConfig rc;
    ConfigEntries entries;
    for (const auto& [k, v] : ck.archive.metadata)
        if (k.rfind("model.", 0) == 0 || k.rfind("train.", 0) == 0 || k.rfind("loss.", 0) == 0)
            entries.emplace_back(k, v);
    apply_entries(rc, entries);
    ck.model = rc.model;
    ck.train = rc.train;
    auto num = [&](const char* key) {
        const std::string* v = ck.archive.meta(key);
        if (!v) throw DataError(path.string() + ": checkpoint lacks '" + key + "'");
        return std::stol(*v);
    };
    ck.step = num("step");
    ck.total_steps = num("total_steps");
    return ck;
}

void restore_model(SaliencyNet& model, const Checkpoint& ck) {
    if (!model.config().compatible_with(ck.model))
        throw ConfigError("checkpoint model configuration does not match the network being restored");
    const auto index = ck.archive.tensor_index();
    auto assign = [&](const std::string& name, Var var) {
        const auto it = index.find(name);
        if (it == index.end()) throw ConfigError("checkpoint lacks tensor '" + name + "'");
        if (it->second->shape() != var.shape())
            throw ConfigError("checkpoint tensor '" + name + "' has shape " + it->second->shape().str() + ", expected " +
                              var.shape().str());
        var.mutable_value() = *it->second;
    };
    for (const auto& p : model.registry().parameters()) assign("param/" + p.name, p.var);
    for (const auto& b : model.registry().buffers()) assign("buffer/" + b.name, b.var);
}

std::unique_ptr<SaliencyNet> load_model(const fs::path& path) {
    const Checkpoint ck = read_checkpoint(path);
    auto net = std::make_unique<SaliencyNet>(ck.model, WeightSource::kRandom);
    restore_model(*net, ck);
    return net;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(SaliencyNet& model, TrainConfig cfg, long total_steps)
    : model_(&model),
      cfg_(std::move(cfg)),
      total_steps_(total_steps),
      warmup_((cfg_.validate(), warmup_steps(total_steps, cfg_.warmup_fraction))),
      sgd_(model.registry(), cfg_.momentum, cfg_.weight_decay) {}

StepRecord Trainer::step(const data::Batch& batch, int epoch) {
    if (step_ >= total_steps_)
        throw ContractError("trainer already ran all " + std::to_string(total_steps_) + " steps");
    model_->set_training(true);
    model_->registry().zero_grad();
    const PredictionPair pair = model_->forward(Var(batch.images));
    StepRecord rec;
    rec.step = step_;
    rec.epoch = epoch;
    rec.stems = batch.stems;
    const Var l = loss::supervised_loss(pair, batch.masks, cfg_.loss, &rec.terms);
    const auto& t = rec.terms;
    if (!std::isfinite(t.total) || !std::isfinite(t.bce1) || !std::isfinite(t.iou1) || !std::isfinite(t.bce2) ||
        !std::isfinite(t.iou2))
        throw NumericError("non-finite loss at step " + std::to_string(step_) + ": total=" + std::to_string(t.total) +
                           " wbce1=" + std::to_string(t.bce1) + " wiou1=" + std::to_string(t.iou1) +
                           " wbce2=" + std::to_string(t.bce2) + " wiou2=" + std::to_string(t.iou2));
    backward(l);
    if (cfg_.grad_clip > 0.0) clip_grad_norm(model_->registry(), cfg_.grad_clip);
    rec.lr_backbone = lr_schedule(step_, total_steps_, warmup_, cfg_.lr_backbone);
    rec.lr_branch = lr_schedule(step_, total_steps_, warmup_, cfg_.lr_branch);
    sgd_.step(rec.lr_backbone, rec.lr_branch);
    ++step_;
    return rec;
}

void Trainer::save_checkpoint(const fs::path& path) const {
    TensorArchive ar;
    ar.metadata.emplace_back("format", kCheckpointFormat);
    ar.metadata.emplace_back("step", std::to_string(step_));
    ar.metadata.emplace_back("total_steps", std::to_string(total_steps_));
    RunConfig rc;
    rc.model = model_->config();
    rc.train = cfg_;
    for (const char* prefix : {"model.", "train.", "loss."})
        for (auto& e : config_entries(rc, prefix)) ar.metadata.push_back(std::move(e));
    const auto& reg = model_->registry();
    for (const auto& p : reg.parameters()) ar.tensors.emplace_back("param/" + p.name, p.var.value());
    for (const auto& b : reg.buffers()) ar.tensors.emplace_back("buffer/" + b.name, b.var.value());
    const auto params = reg.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        ar.tensors.emplace_back("momentum/" + params[i].name, sgd_.momentum_buffers()[i]);
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    write_archive(path, ar);
}

void Trainer::resume(const Checkpoint& ck) {
    if (!(ck.train == cfg_)) throw ConfigError("checkpoint training configuration differs from the current one");
    if (ck.total_steps != total_steps_)
        throw ConfigError("checkpoint was written for " + std::to_string(ck.total_steps) + " total steps, not " +
                          std::to_string(total_steps_));
    restore_model(*model_, ck);
    const auto index = ck.archive.tensor_index();
    const auto params = model_->registry().parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto it = index.find("momentum/" + params[i].name);
        if (it == index.end() || it->second->shape() != params[i].var.shape())
            throw ConfigError("checkpoint lacks momentum for '" + params[i].name + "'");
        sgd_.momentum_buffers()[i] = *it->second;
    }
    step_ = ck.step;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng::derive(seed ^ kShuffleTag, static_cast<std::uint64_t>(epoch));
    // Fisher-Yates on raw engine output keeps the order library-independent.
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.engine()() % i]);
    return order;
}

FitResult fit(SaliencyNet& model, const std::vector<data::Sample>& samples, const TrainConfig& cfg,
              const FitOptions& opt) {
    cfg.validate();
    if (samples.empty()) throw DataError("training set is empty");
    const long per_epoch = steps_per_epoch(static_cast<long>(samples.size()), cfg.batch_size);
    const long total = per_epoch * cfg.epochs;
    Trainer trainer(model, cfg, total);
    if (!opt.resume_from.empty()) trainer.resume(read_checkpoint(opt.resume_from));

    FitResult result;
    const fs::path ckpt_dir = opt.run_dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    result.log = opt.run_dir / "train_log.jsonl";
    std::ofstream log(result.log, opt.resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw DataError("cannot write " + result.log.string());

    const long start = trainer.step_index();
    for (int epoch = static_cast<int>(start / per_epoch); epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(samples.size(), cfg.seed, epoch);
        for (long b = 0; b < per_epoch; ++b) {
            const long step = static_cast<long>(epoch) * per_epoch + b;
            if (step < trainer.step_index()) continue;
            std::vector<data::Sample> chunk;
            const std::size_t lo = static_cast<std::size_t>(b) * cfg.batch_size;
            const std::size_t hi = std::min(samples.size(), lo + cfg.batch_size);
            for (std::size_t i = lo; i < hi; ++i) {
                const std::size_t idx = order[i];
                if (cfg.augment) {
                    Rng rng = Rng::derive(cfg.seed ^ kAugmentTag, static_cast<std::uint64_t>(step), idx);
                    chunk.push_back(data::augment(samples[idx], rng));
                } else {
                    chunk.push_back(samples[idx]);
                }
            }
            const StepRecord rec = trainer.step(data::make_batch(chunk), epoch);
            log << to_json_line(rec) << '\n';
            log.flush();
            if (opt.on_step) opt.on_step(rec);
            result.records.push_back(rec);
        }
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch + 1);
        const fs::path path = epoch + 1 == cfg.epochs ? ckpt_dir / "final.ckpt" : ckpt_dir / name;
        trainer.save_checkpoint(path);
        result.checkpoints.push_back(path);
    }
    return result;
}

}  // namespace sodkit::train
