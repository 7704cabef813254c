#pragma once

// Phase-wise training. Phase 0 fits encoder and decoder on single-frame pose
// estimation, phase 1 trains only the temporal module to predict the pose g
// frames ahead, phase 2 trains only the classifier head. Every phase runs SGD
// with classical momentum and coupled weight decay under a single step drop.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cgap2/metrics.hpp"
#include "cgap2/model.hpp"
#include "cgap2/synthdata.hpp"

namespace cgap2 {

struct OptimConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  int lr_drop_epoch = 5;
  double lr_drop_factor = 0.1;
  int epochs = 15;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
  // Training samples drawn (without replacement) per epoch; 0 uses them all.
  std::size_t samples_per_epoch = 0;

  static OptimConfig pose_phase() { return {}; }
  static OptimConfig classifier_phase() {
    OptimConfig c;
    c.batch_size = 64;
    return c;
  }
  void validate() const;
};

/// learning_rate before lr_drop_epoch, learning_rate * lr_drop_factor from it on.
double lr_schedule(const OptimConfig& config, int epoch);

/// One update of every unfrozen parameter, then its gradient is cleared:
///   g = grad + wd * w;  buf = momentum * buf + g;  w -= lr * buf
template <typename T>
void sgd_step(std::vector<Parameter<T>>& params, const OptimConfig& config, double lr_now);

enum class Phase { Pretrain = 0, Pose = 1, Classifier = 2 };
const char* to_string(Phase p);
/// "pretrain", "pose", "classifier"; anything else is a usage error.
Phase parse_phase(const std::string& name);

/// Sets the freeze flags a phase expects: only the trained stages stay live.
template <typename T>
void prepare_phase(Cgap2Model<T>& model, Phase phase);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;  // MPJPE (mm) for pose phases, accuracy for the classifier
  double seconds = 0.0;
};

struct CurvePoint {
  std::size_t step = 0;
  double val_loss = 0.0;
};

struct TrainReport {
  Phase phase = Phase::Pretrain;
  std::string metric_name;
  std::size_t batch_size = 0;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  std::vector<EpochRecord> epochs;
  // Validation loss before the first step and after every epoch.
  std::vector<CurvePoint> curve;
  // Phase-specific scalars such as the metric before training.
  std::map<std::string, double> summary;
  std::string checkpoint_path;
  double seconds = 0.0;
};

/// "epoch,lr,train_loss,val_loss,val_metric", one row per epoch. Wall time is
/// left to the JSON form so that reruns produce identical bytes.
std::string report_csv(const TrainReport& report);
std::string report_json(const TrainReport& report);
/// "global step,validation loss"
std::string curve_csv(const TrainReport& report);

using EpochCallback = std::function<void(const TrainReport&, const EpochRecord&)>;

template <typename T>
TrainReport pretrain_encoder(Cgap2Model<T>& model, const synth::Dataset& data, const OptimConfig& config,
                             const EpochCallback& on_epoch = {});

template <typename T>
TrainReport train_pose_phase(Cgap2Model<T>& model, const synth::Dataset& data, const OptimConfig& config,
                             const EpochCallback& on_epoch = {});

template <typename T>
TrainReport train_classifier_phase(Cgap2Model<T>& model, const synth::Dataset& data, const OptimConfig& config,
                                   const EpochCallback& on_epoch = {});

/// Frames as network input: [3,S,S] bytes mapped to v / 127.5 - 1.
template <typename T>
void normalize_frame(std::span<const std::uint8_t> frame, T* out);

/// One context window of one sequence.
struct WindowRef {
  std::size_t sequence = 0;  // index into Dataset::sequences
  WindowSample window;
};

/// Every window (hop 1) of every sequence in a split, sequence-major.
std::vector<WindowRef> split_windows(const synth::Dataset& data, synth::Split split, const SamplerConfig& sampler,
                                     std::size_t hop = 1);

struct PoseEvaluation {
  EvalReport report;               // grouped by class over per_window
  double mean_loss = 0.0;          // mean l1_pose_loss per predicted frame
  std::vector<double> per_window;  // MPJPE of each window, averaged over its k targets
  std::vector<int> labels;
};

/// Future-pose error of the full pipeline on a set of windows (Eval mode).
template <typename T>
PoseEvaluation evaluate_pose(Cgap2Model<T>& model, const synth::Dataset& data, const std::vector<WindowRef>& windows);

struct ClassEvaluation {
  double accuracy = 0.0;
  double historical_only_accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<double> logits;  // [windows, classes]
  std::vector<int> labels;
};

template <typename T>
ClassEvaluation evaluate_classifier(Cgap2Model<T>& model, const synth::Dataset& data,
                                    const std::vector<WindowRef>& windows);

}  // namespace cgap2
