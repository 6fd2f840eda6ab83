#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sodkit/archive.hpp"
#include "sodkit/data.hpp"
#include "sodkit/losses.hpp"
#include "sodkit/model.hpp"

namespace sodkit::train {

struct TrainConfig {
    double lr_backbone = 0.002;
    double lr_branch = 0.02;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int batch_size = 16;
    int epochs = 36;
    double warmup_fraction = 0.05;
    loss::LossConfig loss;
    std::uint64_t seed = 0;
    double grad_clip = 0.0;  // global L2 norm; 0 disables
    bool augment = true;
    std::string device = "cpu";

    // Throws ConfigError.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

long steps_per_epoch(long samples, int batch_size);

// max(1, round(fraction * total)), capped at total.
long warmup_steps(long total_steps, double fraction);

// Linear warm-up to the peak over the first warmup_steps steps, then linear
// decay reaching 0 at total_steps.
double lr_schedule(long step, long total_steps, long warmup_steps, double peak_lr);

// Momentum SGD with coupled L2 decay on the flagged parameters:
//   g' = g + wd * w,  v = m * v + g',  w -= lr * v
class Sgd {
  public:
    Sgd(ParameterRegistry& registry, double momentum, double weight_decay);

    // Parameters without a gradient are treated as having a zero gradient.
    void step(double lr_backbone, double lr_branch);

    const std::vector<Tensor>& momentum_buffers() const { return buffers_; }
    std::vector<Tensor>& momentum_buffers() { return buffers_; }

  private:
    ParameterRegistry* registry_;
    double momentum_;
    double weight_decay_;
    std::vector<Tensor> buffers_;
};

// Scales every gradient so their joint L2 norm is at most max_norm. Returns
// the norm before scaling.
double clip_grad_norm(ParameterRegistry& registry, double max_norm);

struct StepRecord {
    long step = 0;
    int epoch = 0;
    double lr_backbone = 0;
    double lr_branch = 0;
    loss::LossBreakdown<double> terms;
    std::vector<std::string> stems;
};

std::string to_json_line(const StepRecord& record);

struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    long step = 0;
    long total_steps = 0;
    TensorArchive archive;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies parameters and buffers into the model. Throws ConfigError when the
// architectures differ or a tensor is missing or misshapen.
void restore_model(SaliencyNet& model, const Checkpoint& ckpt);

// Rebuilds the network recorded in the checkpoint.
std::unique_ptr<SaliencyNet> load_model(const std::filesystem::path& path);

class Trainer {
  public:
    Trainer(SaliencyNet& model, TrainConfig cfg, long total_steps);

    // One forward/backward/update at the current step, then advances it.
    // Throws NumericError on a non-finite loss.
    StepRecord step(const data::Batch& batch, int epoch = 0);

    long step_index() const { return step_; }
    long total_steps() const { return total_steps_; }
    long warmup() const { return warmup_; }
    const TrainConfig& config() const { return cfg_; }
    SaliencyNet& model() { return *model_; }
    Sgd& optimizer() { return sgd_; }

    void save_checkpoint(const std::filesystem::path& path) const;
    // Restores parameters, buffers, momentum and the step counter. The stored
    // training configuration must equal this trainer's.
    void resume(const Checkpoint& ckpt);

  private:
    SaliencyNet* model_;
    TrainConfig cfg_;
    long total_steps_;
    long warmup_;
    long step_ = 0;
    Sgd sgd_;
};

struct FitOptions {
    std::filesystem::path run_dir;
    std::filesystem::path resume_from;  // empty: fresh run
    std::function<void(const StepRecord&)> on_step;
};

struct FitResult {
    std::vector<std::filesystem::path> checkpoints;  // last entry is the final one
    std::filesystem::path log;
    std::vector<StepRecord> records;
};

// Runs epochs * ceil(n / batch) steps. Writes <run_dir>/train_log.jsonl and
// <run_dir>/checkpoints/epoch_NNN.ckpt after every epoch except the last,
// whose state goes to final.ckpt.
FitResult fit(SaliencyNet& model, const std::vector<data::Sample>& samples, const TrainConfig& cfg,
              const FitOptions& opt);

// Batch order for one epoch: a permutation of [0, n) fixed by seed and epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace sodkit::train
