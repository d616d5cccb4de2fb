#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "blendnet/checkpoint.hpp"
#include "blendnet/decoders.hpp"
#include "blendnet/hierarchy.hpp"
#include "blendnet/sample.hpp"

namespace blendnet {

enum class LrDecay { halve_every_5, halve_every_3 };
enum class Stage { regular, warm_up, fine_tune };
enum class Optimizer { adam, sgd };

std::string to_string(LrDecay d);
std::string to_string(Stage s);
std::string to_string(Optimizer o);
LrDecay parse_lr_decay(const std::string& s);
Stage parse_stage(const std::string& s);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 25;
  std::size_t batch_size = 128;
  LrDecay lr_decay = LrDecay::halve_every_5;
  Stage stage = Stage::regular;
  // Keyed by logical slot name ("clip.motion", ...) or "decoder"; missing keys mean 1.
  std::map<std::string, double> module_lr_multipliers;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;
  double clip_norm = 5.0;  // global gradient norm cap, <= 0 disables
  std::optional<std::size_t> max_steps;

  void validate() const;
};

// base * 0.5^floor(epoch / period), period 5 or 3.
double lr_at(std::size_t epoch, const TrainConfig& config);

// Network plus decoder, everything training updates.
template <typename T>
struct Model {
  HierarchyConfig network;
  SharingRegistry<T> registry;
  DecoderConfig decoder_config;
  DecoderParameters<T> decoder;

  // Fresh model; network and decoder draw from one stream seeded by `seed`.
  static Model create(const HierarchyConfig& network, std::size_t answers, std::uint64_t seed);

  // Visits every trainable matrix in a fixed order: physical sets, then decoder.
  template <typename F>
  void visit(F&& f) {
    for (std::size_t p = 0; p < registry.sets.size(); ++p)
      registry.sets[p].visit([&](const std::string& name, Matrix<T>& m) { f("set" + std::to_string(p) + "." + name, m); });
    decoder.visit([&](const std::string& name, Matrix<T>& m) { f("decoder." + name, m); });
  }
  template <typename F>
  void visit(F&& f) const {
    for (std::size_t p = 0; p < registry.sets.size(); ++p)
      registry.sets[p].visit(
          [&](const std::string& name, const Matrix<T>& m) { f("set" + std::to_string(p) + "." + name, m); });
    decoder.visit([&](const std::string& name, const Matrix<T>& m) { f("decoder." + name, m); });
  }
};

template <typename T>
struct TrainState {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::uint64_t adam_steps = 0;
  std::vector<Matrix<T>> first_moment, second_moment;  // in Model::visit order
  std::optional<double> best_metric;
  std::size_t best_epoch = 0;
  std::mt19937_64 rng;
};

// One optimizer update of `param` from `grad` scaled by `grad_scale`. Adam
// uses 0.9/0.999/1e-8 with bias correction for `adam_steps` updates so far
// (including this one); its moments are updated even when lr is 0.
template <typename T>
void optimizer_update(Optimizer kind, double lr, Matrix<T>& param, const Matrix<double>& grad, double grad_scale,
                      Matrix<T>& first_moment, Matrix<T>& second_moment, std::uint64_t adam_steps);

struct Metrics {
  Task task = Task::open_ended;
  double value = 0.0;  // accuracy, or mean squared error of rounded counts
  std::size_t samples = 0;

  std::string name() const { return task == Task::count ? "count_mse" : "accuracy"; }
  bool better_than(const Metrics& other) const;
  bool better_than(double other) const;
};

// UsageError on empty input or a length mismatch.
Metrics score_predictions(Task task, const std::vector<std::int64_t>& predicted,
                          const std::vector<std::int64_t>& labels);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

std::string format_step(const StepRecord& r);

template <typename T>
class Trainer {
 public:
  using StepCallback = std::function<void(const StepRecord&)>;
  // Called after each epoch with the validation metrics and whether they are the best so far.
  using EpochCallback = std::function<void(const TrainState<T>&, const Metrics&, bool improved)>;

  Trainer(Model<T>& model, TrainConfig config);

  TrainState<T> initial_state() const;

  // Mean loss over the batch, one optimizer update. NumericError on a non-finite loss.
  double train_step(const std::vector<const VideoSample*>& batch, TrainState<T>& state);

  // Epochs from state.epoch up to config.epochs (or max_steps).
  void run(const std::vector<VideoSample>& train, const std::vector<VideoSample>& val, TrainState<T>& state);

  // Effective learning rate of a logical slot ("clip.motion", ..., "decoder") at an epoch.
  double slot_lr(const std::string& slot, std::size_t epoch) const;

  const TrainConfig& config() const { return config_; }
  bool warm_up() const { return config_.stage == Stage::warm_up; }

  StepCallback on_step;
  EpochCallback on_epoch;

 private:
  Model<T>& model_;
  TrainConfig config_;
  std::vector<double> multipliers_;  // per trainable matrix, Model::visit order
};

// Network in warm-up mode when `warm_up`, regular otherwise.
template <typename T>
Matrix<double> predict(const Model<T>& model, const VideoSample& sample, bool warm_up);

// UsageError on an empty dataset.
template <typename T>
Metrics evaluate(const Model<T>& model, const std::vector<VideoSample>& data, bool warm_up);

struct TwoStageResult {
  Metrics warm_up;
  Metrics fine_tune;
};

// Stage 1 trains with zeroed question contexts and warm-up decoders. Stage 2
// restores the question, slows the motion-conditioned slots to 0.05x, decays
// every three epochs and starts from the stage-1 weights with fresh optimizer
// state. Callbacks of `hooks` are installed on both stages.
template <typename T>
TwoStageResult run_two_stage(Model<T>& model, const std::vector<VideoSample>& train,
                             const std::vector<VideoSample>& val, const TrainConfig& warm_cfg,
                             const TrainConfig& fine_cfg,
                             const std::function<void(Trainer<T>&, Stage)>& hooks = {});

// Fills in the fine-tune defaults: 0.05 on both motion-conditioned slots
// (unless given) and the every-three-epochs decay.
TrainConfig fine_tune_defaults(TrainConfig config);

// Model plus optional training state in one checkpoint file.
template <typename T>
Checkpoint to_checkpoint(const Model<T>& model, const TrainState<T>* state);
template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ck);
// FormatError when the checkpoint carries no training state.
template <typename T>
TrainState<T> state_from_checkpoint(const Checkpoint& ck, const Model<T>& model);

}  // namespace blendnet
