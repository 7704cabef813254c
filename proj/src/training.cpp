#include "cgap2/training.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace cgap2 {

void OptimConfig::validate() const {
  require(learning_rate > 0.0, ErrorKind::Config, "optimizer: learning_rate must be positive");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::Config, "optimizer: momentum must lie in [0,1)");
  require(weight_decay >= 0.0, ErrorKind::Config, "optimizer: weight_decay must be non-negative");
  require(lr_drop_factor > 0.0, ErrorKind::Config, "optimizer: lr_drop_factor must be positive");
  require(lr_drop_epoch >= 0, ErrorKind::Config, "optimizer: lr_drop_epoch must be non-negative");
  require(epochs >= 1, ErrorKind::Config, "optimizer: epochs must be at least 1");
  require(batch_size >= 1, ErrorKind::Config, "optimizer: batch_size must be at least 1");
}

double lr_schedule(const OptimConfig& config, int epoch) {
  return epoch < config.lr_drop_epoch ? config.learning_rate : config.learning_rate * config.lr_drop_factor;
}

template <typename T>
void sgd_step(std::vector<Parameter<T>>& params, const OptimConfig& config, double lr_now) {
  // Validate first so a failure leaves every parameter untouched.
  for (const auto& p : params)
    if (!p.frozen)
      require(p.value.has_grad(), ErrorKind::Optimizer, "sgd_step: parameter '" + p.name + "' has no gradient");
  const T lr = T(lr_now), mom = T(config.momentum), wd = T(config.weight_decay);
  for (auto& p : params) {
    if (p.frozen) continue;
    auto w = p.value.data();
    auto g = p.value.grad();
    auto& buf = p.momentum_buffer;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T gi = g[i] + wd * w[i];
      buf[i] = mom * buf[i] + gi;
      w[i] -= lr * buf[i];
    }
    p.value.zero_grad();
  }
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::Pretrain: return "pretrain";
    case Phase::Pose: return "pose";
    case Phase::Classifier: return "classifier";
  }
  return "?";
}

Phase parse_phase(const std::string& name) {
  if (name == "pretrain") return Phase::Pretrain;
  if (name == "pose") return Phase::Pose;
  if (name == "classifier") return Phase::Classifier;
  fail(ErrorKind::Usage, "unknown phase '" + name + "' (expected pretrain, pose or classifier)");
}

namespace {

bool stage_trained_in(Stage s, Phase p) {
  switch (p) {
    case Phase::Pretrain: return s == Stage::Encoder || s == Stage::Decoder;
    case Phase::Pose: return s == Stage::Temporal;
    case Phase::Classifier: return s == Stage::Classifier;
  }
  return false;
}

template <typename T>
void check_phase_contract(Cgap2Model<T>& model, Phase phase) {
  const int needed = int(phase) - 1;
  require(model.completed_phase >= needed, ErrorKind::Phase,
          std::string("phase '") + to_string(phase) + "' needs phase " + std::to_string(needed) +
              " to be completed first (model has completed " + std::to_string(model.completed_phase) + ")");
  for (Stage s : kAllStages) {
    const bool trained = stage_trained_in(s, phase);
    for (auto* p : model.stage_parameters(s)) {
      require(trained != p->frozen, ErrorKind::Phase,
              std::string("phase '") + to_string(phase) + "': stage " + to_string(s) + " must be " +
                  (trained ? "trainable" : "frozen") + " but parameter '" + p->name + "' is not");
    }
  }
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Per-epoch sample order: a fresh permutation from a stream keyed by the phase
// and epoch, truncated to the epoch budget.
std::vector<std::size_t> epoch_order(std::size_t count, const OptimConfig& config, Phase phase, int epoch) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(synth::derive_seed(config.seed, 0xE90C0000ull + std::uint64_t(phase) * 4096 + std::uint64_t(epoch)));
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  if (config.samples_per_epoch > 0 && config.samples_per_epoch < count) order.resize(config.samples_per_epoch);
  return order;
}

constexpr std::size_t kEvalBatch = 64;
// Pose losses are reported in millimeters but optimised in meters; with
// millimeter-scale gradients the recipe's learning rate diverges at once.
constexpr double kPoseGradScale = 1e-3;

template <typename T>
void backward_scaled(const Tensor<T>& loss, double scale) {
  backward(mul(loss, Tensor<T>::scalar(T(scale))));
}
// Phase 0 validates on an evenly strided subset of validation frames.
constexpr std::size_t kPretrainValFrames = 256;

struct FrameRef {
  std::size_t sequence = 0;
  std::size_t frame = 0;
};

template <typename T>
Tensor<T> frame_batch(const synth::Dataset& data, const std::vector<FrameRef>& refs, std::size_t begin,
                      std::size_t end) {
  const std::size_t S = data.sequences.at(refs.at(begin).sequence).image_size, n = 3 * S * S;
  Tensor<T> out({end - begin, 3, S, S});
  for (std::size_t i = begin; i < end; ++i)
    normalize_frame<T>(data.sequences[refs[i].sequence].frame(refs[i].frame), out.data().data() + (i - begin) * n);
  return out;
}

template <typename T>
void copy_pose(const synth::SyntheticSequence& seq, std::size_t frame, T* out) {
  const auto p = seq.pose(frame);
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = T(p[i]);
}

template <typename T>
Tensor<T> pose_batch(const synth::Dataset& data, const std::vector<FrameRef>& refs, std::size_t begin,
                     std::size_t end) {
  const std::size_t J = synth::kJoints;
  Tensor<T> out({end - begin, J, 3});
  for (std::size_t i = begin; i < end; ++i)
    copy_pose(data.sequences[refs[i].sequence], refs[i].frame, out.data().data() + (i - begin) * J * 3);
  return out;
}

// Encoder output of every frame of the listed sequences, [T][F*s*s] each.
template <typename T>
class FeatureBank {
 public:
  FeatureBank(Cgap2Model<T>& model, const synth::Dataset& data, const std::vector<std::size_t>& sequences) {
    const auto& c = model.config();
    frame_numel_ = c.feature_channels * c.feature_spatial * c.feature_spatial;
    features_.resize(data.sequences.size());
    NoGradGuard ng;
    std::vector<FrameRef> refs;
    for (auto s : sequences)
      for (std::size_t t = 0; t < data.sequences[s].length; ++t) refs.push_back({s, t});
    for (auto s : sequences) features_[s].assign(data.sequences[s].length * frame_numel_, T(0));
    for (std::size_t b = 0; b < refs.size(); b += kEvalBatch) {
      const std::size_t e = std::min(refs.size(), b + kEvalBatch);
      auto f = model.encode(frame_batch<T>(data, refs, b, e));
      for (std::size_t i = b; i < e; ++i)
        std::copy_n(f.data().data() + (i - b) * frame_numel_, frame_numel_,
                    features_[refs[i].sequence].data() + refs[i].frame * frame_numel_);
    }
  }

  const T* frame(std::size_t sequence, std::size_t t) const { return features_.at(sequence).data() + t * frame_numel_; }
  std::size_t frame_numel() const { return frame_numel_; }

 private:
  std::size_t frame_numel_ = 0;
  std::vector<std::vector<T>> features_;
};

std::vector<std::size_t> all_sequences(const synth::Dataset& data) {
  std::vector<std::size_t> v(data.sequences.size());
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::vector<std::size_t> window_sequences(const std::vector<WindowRef>& windows) {
  std::vector<std::size_t> v;
  for (const auto& w : windows) v.push_back(w.sequence);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Historical clip [B,F,n,s,s] for windows order[begin..end).
template <typename T>
Tensor<T> clip_batch(const FeatureBank<T>& bank, const ModelConfig& c, const std::vector<WindowRef>& windows,
                     const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
  const std::size_t F = c.feature_channels, n = c.context_n, hw = c.feature_spatial * c.feature_spatial;
  Tensor<T> out({end - begin, F, n, c.feature_spatial, c.feature_spatial});
  T* dst = out.data().data();
  for (std::size_t b = begin; b < end; ++b) {
    const auto& w = windows[order[b]];
    for (std::size_t t = 0; t < n; ++t) {
      const T* src = bank.frame(w.sequence, w.window.input_indices[t]);
      for (std::size_t ch = 0; ch < F; ++ch)
        std::copy_n(src + ch * hw, hw, dst + (((b - begin) * F + ch) * n + t) * hw);
    }
  }
  return out;
}

// Future poses [B*k,J,3], window-major like clip_to_frames.
template <typename T>
Tensor<T> target_batch(const synth::Dataset& data, const std::vector<WindowRef>& windows,
                       const std::vector<std::size_t>& order, std::size_t begin, std::size_t end, std::size_t k) {
  const std::size_t J = synth::kJoints;
  Tensor<T> out({(end - begin) * k, J, 3});
  for (std::size_t b = begin; b < end; ++b) {
    const auto& w = windows[order[b]];
    for (std::size_t j = 0; j < k; ++j)
      copy_pose(data.sequences[w.sequence], w.window.target_indices[j], out.data().data() + ((b - begin) * k + j) * J * 3);
  }
  return out;
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

template <typename T>
std::vector<double> to_double(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

// Forward future-pose prediction from cached encoder features, Eval mode.
template <typename T>
PoseEvaluation evaluate_pose_cached(Cgap2Model<T>& model, const synth::Dataset& data, const FeatureBank<T>& bank,
                                    const std::vector<WindowRef>& windows) {
  NoGradGuard ng;
  const auto& c = model.config();
  const std::size_t k = c.k_value;
  const auto order = identity_order(windows.size());
  PoseEvaluation ev;
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < windows.size(); b += kEvalBatch) {
    const std::size_t e = std::min(windows.size(), b + kEvalBatch);
    auto pred = model.temporal(clip_batch(bank, c, windows, order, b, e), NormMode::Eval);
    auto pose = model.heatmaps_to_pose(model.decode(model.clip_to_frames(pred)));
    auto tgt = target_batch<T>(data, windows, order, b, e, k);
    loss_sum += double(l1_pose_loss(pose, tgt).item()) * double((e - b) * k);
    const auto per = per_sample_mpjpe(to_double(pose), to_double(tgt), synth::kJoints);
    for (std::size_t i = b; i < e; ++i) {
      double m = 0.0;
      for (std::size_t j = 0; j < k; ++j) m += per[(i - b) * k + j];
      ev.per_window.push_back(m / double(k));
      ev.labels.push_back(data.sequences[windows[i].sequence].class_id);
    }
  }
  ev.mean_loss = windows.empty() ? 0.0 : loss_sum / double(windows.size() * k);
  ev.report = mpjpe_per_class(ev.per_window, ev.labels);
  return ev;
}

struct PoseMetrics {
  double loss = 0.0;
  double mpjpe = 0.0;
};

template <typename T>
PoseMetrics evaluate_frames(Cgap2Model<T>& model, const synth::Dataset& data, const std::vector<FrameRef>& frames) {
  NoGradGuard ng;
  double loss = 0.0, err = 0.0;
  for (std::size_t b = 0; b < frames.size(); b += kEvalBatch) {
    const std::size_t e = std::min(frames.size(), b + kEvalBatch);
    auto pose = model.heatmaps_to_pose(model.decode(model.encode(frame_batch<T>(data, frames, b, e))));
    auto tgt = pose_batch<T>(data, frames, b, e);
    loss += double(l1_pose_loss(pose, tgt).item()) * double(e - b);
    err += mpjpe(pose, tgt) * double(e - b);
  }
  const double n = double(std::max<std::size_t>(frames.size(), 1));
  return {loss / n, err / n};
}

void require_split(const std::vector<std::size_t>& seqs, const char* what) {
  require(!seqs.empty(), ErrorKind::Data, std::string("dataset has no ") + what + " sequences");
}

void finish_epoch(TrainReport& r, EpochRecord rec, std::size_t step, const EpochCallback& cb) {
  r.epochs.push_back(rec);
  r.curve.push_back({step, rec.val_loss});
  if (cb) cb(r, rec);
}

}  // namespace

template <typename T>
void normalize_frame(std::span<const std::uint8_t> frame, T* out) {
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = T(frame[i]) / T(127.5) - T(1);
}

std::vector<WindowRef> split_windows(const synth::Dataset& data, synth::Split split, const SamplerConfig& sampler,
                                     std::size_t hop) {
  std::vector<WindowRef> out;
  for (auto i : data.indices(split)) {
    const auto& s = data.sequences[i];
    for (auto& w : enumerate_windows(sampler, s.length, hop, s.id)) out.push_back({i, std::move(w)});
  }
  return out;
}

template <typename T>
void prepare_phase(Cgap2Model<T>& model, Phase phase) {
  for (Stage s : kAllStages) model.set_stage_frozen(s, !stage_trained_in(s, phase));
}

template <typename T>
TrainReport pretrain_encoder(Cgap2Model<T>& model, const synth::Dataset& data, const OptimConfig& config,
                             const EpochCallback& on_epoch) {
  config.validate();
  require(model.completed_phase < 0, ErrorKind::Phase, "phase 'pretrain' expects freshly initialised weights");
  check_phase_contract(model, Phase::Pretrain);
  const auto t_start = Clock::now();
  const auto train_seqs = data.indices(synth::Split::Train), val_seqs = data.indices(synth::Split::Val);
  require_split(train_seqs, "training");
  require_split(val_seqs, "validation");
  std::vector<FrameRef> train, val;
  for (auto s : train_seqs)
    for (std::size_t t = 0; t < data.sequences[s].length; ++t) train.push_back({s, t});
  std::vector<FrameRef> all_val;
  for (auto s : val_seqs)
    for (std::size_t t = 0; t < data.sequences[s].length; ++t) all_val.push_back({s, t});
  const std::size_t stride = (all_val.size() + kPretrainValFrames - 1) / kPretrainValFrames;
  for (std::size_t i = 0; i < all_val.size(); i += stride) val.push_back(all_val[i]);

  TrainReport r;
  r.phase = Phase::Pretrain;
  r.metric_name = "val_mpjpe_mm";
  r.batch_size = config.batch_size;
  r.train_samples = train.size();
  r.val_samples = val.size();
  const auto init = evaluate_frames(model, data, val);
  r.summary["initial_val_mpjpe_mm"] = init.mpjpe;
  r.curve.push_back({0, init.loss});

  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lr = lr_schedule(config, epoch);
    const auto order = epoch_order(train.size(), config, Phase::Pretrain, epoch);
    std::vector<FrameRef> picked;
    for (auto i : order) picked.push_back(train[i]);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < picked.size(); b += config.batch_size, ++step) {
      const std::size_t e = std::min(picked.size(), b + config.batch_size);
      auto pose = model.heatmaps_to_pose(model.decode(model.encode(frame_batch<T>(data, picked, b, e))));
      auto loss = l1_pose_loss(pose, pose_batch<T>(data, picked, b, e));
      loss_sum += double(loss.item()) * double(e - b);
      backward_scaled(loss, kPoseGradScale);
      sgd_step(model.parameters(), config, lr);
    }
    const auto v = evaluate_frames(model, data, val);
    finish_epoch(r, {epoch, lr, loss_sum / double(picked.size()), v.loss, v.mpjpe, seconds_since(t0)}, step,
                    on_epoch);
  }
  r.summary["final_val_mpjpe_mm"] = r.epochs.back().val_metric;
  model.completed_phase = std::max(model.completed_phase, 0);
  r.seconds = seconds_since(t_start);
  return r;
}

template <typename T>
TrainReport train_pose_phase(Cgap2Model<T>& model, const synth::Dataset& data, const OptimConfig& config,
                             const EpochCallback& on_epoch) {
  config.validate();
  check_phase_contract(model, Phase::Pose);
  const auto t_start = Clock::now();
  const auto& c = model.config();
  const auto train = split_windows(data, synth::Split::Train, c.sampler());
  const auto val = split_windows(data, synth::Split::Val, c.sampler());
  require(!train.empty(), ErrorKind::Data, "phase 'pose': no training windows (sequences too short?)");
  require(!val.empty(), ErrorKind::Data, "phase 'pose': no validation windows (sequences too short?)");
  const FeatureBank<T> bank(model, data, all_sequences(data));

  TrainReport r;
  r.phase = Phase::Pose;
  r.metric_name = "val_mpjpe_mm";
  r.batch_size = config.batch_size;
  r.train_samples = train.size();
  r.val_samples = val.size();
  const auto init = evaluate_pose_cached(model, data, bank, val);
  r.summary["initial_val_mpjpe_mm"] = init.report.overall_mpjpe;
  r.curve.push_back({0, init.mean_loss});

  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lr = lr_schedule(config, epoch);
    const auto order = epoch_order(train.size(), config, Phase::Pose, epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size, ++step) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      auto pred = model.temporal(clip_batch(bank, c, train, order, b, e), NormMode::Train);
      auto pose = model.heatmaps_to_pose(model.decode(model.clip_to_frames(pred)));
      auto loss = l1_pose_loss(pose, target_batch<T>(data, train, order, b, e, c.k_value));
      loss_sum += double(loss.item()) * double(e - b);
      backward_scaled(loss, kPoseGradScale);
      sgd_step(model.parameters(), config, lr);
    }
    const auto v = evaluate_pose_cached(model, data, bank, val);
    finish_epoch(r, {epoch, lr, loss_sum / double(order.size()), v.mean_loss, v.report.overall_mpjpe,
                        seconds_since(t0)},
                    step, on_epoch);
  }
  r.summary["final_val_mpjpe_mm"] = r.epochs.back().val_metric;
  model.completed_phase = std::max(model.completed_phase, 1);
  r.seconds = seconds_since(t_start);
  return r;
}

namespace {

// Historical and predicted feature maps of each window, flattened.
template <typename T>
struct WindowFeatures {
  std::vector<T> history;    // [W, F*n*s*s]
  std::vector<T> predicted;  // [W, F*k*s*s]
  std::vector<int> labels;
  std::size_t hist_numel = 0, pred_numel = 0;
};

template <typename T>
WindowFeatures<T> window_features(Cgap2Model<T>& model, const synth::Dataset& data, const FeatureBank<T>& bank,
                                  const std::vector<WindowRef>& windows) {
  NoGradGuard ng;
  const auto& c = model.config();
  const std::size_t fs = c.feature_channels * c.feature_spatial * c.feature_spatial;
  WindowFeatures<T> wf;
  wf.hist_numel = fs * c.context_n;
  wf.pred_numel = fs * c.k_value;
  const auto order = identity_order(windows.size());
  for (std::size_t b = 0; b < windows.size(); b += kEvalBatch) {
    const std::size_t e = std::min(windows.size(), b + kEvalBatch);
    auto clip = clip_batch(bank, c, windows, order, b, e);
    auto pred = model.temporal(clip, NormMode::Eval);
    wf.history.insert(wf.history.end(), clip.data().begin(), clip.data().end());
    wf.predicted.insert(wf.predicted.end(), pred.data().begin(), pred.data().end());
  }
  for (const auto& w : windows) wf.labels.push_back(data.sequences[w.sequence].class_id);
  return wf;
}

template <typename T>
Tensor<T> gather(const std::vector<T>& src, std::size_t numel, Shape tail, const std::vector<std::size_t>& order,
                 std::size_t begin, std::size_t end, bool zero = false) {
  Shape shape{end - begin};
  shape.insert(shape.end(), tail.begin(), tail.end());
  Tensor<T> out(shape);
  if (!zero)
    for (std::size_t b = begin; b < end; ++b)
      std::copy_n(src.data() + order[b] * numel, numel, out.data().data() + (b - begin) * numel);
  return out;
}

template <typename T>
ClassEvaluation evaluate_window_features(Cgap2Model<T>& model, const WindowFeatures<T>& wf) {
  NoGradGuard ng;
  const auto& c = model.config();
  const std::size_t W = wf.labels.size(), s = c.feature_spatial, F = c.feature_channels;
  const auto order = identity_order(W);
  ClassEvaluation ev;
  ev.labels = wf.labels;
  double loss = 0.0;
  std::vector<double> hist_logits;
  for (std::size_t b = 0; b < W; b += kEvalBatch) {
    const std::size_t e = std::min(W, b + kEvalBatch);
    auto hist = gather(wf.history, wf.hist_numel, {F, c.context_n, s, s}, order, b, e);
    auto pred = gather(wf.predicted, wf.pred_numel, {F, c.k_value, s, s}, order, b, e);
    auto zeros = gather(wf.predicted, wf.pred_numel, {F, c.k_value, s, s}, order, b, e, true);
    auto logits = model.classify_features(hist, pred);
    auto lab = std::span<const int>(wf.labels).subspan(b, e - b);
    loss += double(softmax_cross_entropy(logits, lab).item()) * double(e - b);
    ev.logits.insert(ev.logits.end(), logits.data().begin(), logits.data().end());
    auto hl = model.classify_features(hist, zeros);
    hist_logits.insert(hist_logits.end(), hl.data().begin(), hl.data().end());
  }
  auto hits = [&](const std::vector<double>& logits) {
    const auto am = argmax_rows(logits, c.num_classes);
    std::size_t n = 0;
    for (std::size_t i = 0; i < W; ++i) n += am[i] == wf.labels[i];
    return W == 0 ? 0.0 : double(n) / double(W);
  };
  ev.accuracy = hits(ev.logits);
  ev.historical_only_accuracy = hits(hist_logits);
  ev.mean_loss = W == 0 ? 0.0 : loss / double(W);
  return ev;
}

}  // namespace

template <typename T>
TrainReport train_classifier_phase(Cgap2Model<T>& model, const synth::Dataset& data, const OptimConfig& config,
                                   const EpochCallback& on_epoch) {
  config.validate();
  check_phase_contract(model, Phase::Classifier);
  const auto t_start = Clock::now();
  const auto& c = model.config();
  const auto train = split_windows(data, synth::Split::Train, c.sampler());
  const auto val = split_windows(data, synth::Split::Val, c.sampler());
  require(!train.empty(), ErrorKind::Data, "phase 'classifier': no training windows (sequences too short?)");
  require(!val.empty(), ErrorKind::Data, "phase 'classifier': no validation windows (sequences too short?)");
  for (const auto& s : data.sequences)
    require(s.class_id >= 0 && std::size_t(s.class_id) < c.num_classes, ErrorKind::Data,
            "sequence " + s.id + " has class " + std::to_string(s.class_id) + " but the model has " +
                std::to_string(c.num_classes) + " classes");
  WindowFeatures<T> tr, va;
  {
    const FeatureBank<T> bank(model, data, all_sequences(data));
    tr = window_features(model, data, bank, train);
    va = window_features(model, data, bank, val);
  }

  TrainReport r;
  r.phase = Phase::Classifier;
  r.metric_name = "val_accuracy";
  r.batch_size = config.batch_size;
  r.train_samples = train.size();
  r.val_samples = val.size();
  const auto init = evaluate_window_features(model, va);
  r.summary["initial_val_accuracy"] = init.accuracy;
  r.curve.push_back({0, init.mean_loss});

  const std::size_t s = c.feature_spatial, F = c.feature_channels;
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lr = lr_schedule(config, epoch);
    const auto order = epoch_order(train.size(), config, Phase::Classifier, epoch);
    std::vector<int> labels(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) labels[i] = tr.labels[order[i]];
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size, ++step) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      auto hist = gather(tr.history, tr.hist_numel, {F, c.context_n, s, s}, order, b, e);
      auto pred = gather(tr.predicted, tr.pred_numel, {F, c.k_value, s, s}, order, b, e);
      auto loss = softmax_cross_entropy(model.classify_features(hist, pred),
                                        std::span<const int>(labels).subspan(b, e - b));
      loss_sum += double(loss.item()) * double(e - b);
      backward(loss);
      sgd_step(model.parameters(), config, lr);
    }
    const auto v = evaluate_window_features(model, va);
    finish_epoch(r, {epoch, lr, loss_sum / double(order.size()), v.mean_loss, v.accuracy, seconds_since(t0)},
                    step, on_epoch);
  }
  const auto fin = evaluate_window_features(model, va);
  r.summary["final_val_accuracy"] = fin.accuracy;
  r.summary["historical_only_val_accuracy"] = fin.historical_only_accuracy;
  r.summary["chance_accuracy"] = 1.0 / double(c.num_classes);
  model.completed_phase = std::max(model.completed_phase, 2);
  r.seconds = seconds_since(t_start);
  return r;
}

template <typename T>
PoseEvaluation evaluate_pose(Cgap2Model<T>& model, const synth::Dataset& data, const std::vector<WindowRef>& windows) {
  const FeatureBank<T> bank(model, data, window_sequences(windows));
  return evaluate_pose_cached(model, data, bank, windows);
}

template <typename T>
ClassEvaluation evaluate_classifier(Cgap2Model<T>& model, const synth::Dataset& data,
                                    const std::vector<WindowRef>& windows) {
  const FeatureBank<T> bank(model, data, window_sequences(windows));
  return evaluate_window_features(model, window_features(model, data, bank, windows));
}

// ---------------------------------------------------------------------------
// Report serialisation
// ---------------------------------------------------------------------------

namespace {

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

}  // namespace

std::string report_csv(const TrainReport& r) {
  std::ostringstream o;
  o << "epoch,lr,train_loss,val_loss,val_metric\n";
  for (const auto& e : r.epochs)
    o << e.epoch << ',' << num(e.lr) << ',' << num(e.train_loss) << ',' << num(e.val_loss) << ','
      << num(e.val_metric) << '\n';
  return o.str();
}

std::string curve_csv(const TrainReport& r) {
  std::ostringstream o;
  o << "global step,validation loss\n";
  for (const auto& p : r.curve) o << p.step << ',' << num(p.val_loss) << '\n';
  return o.str();
}

std::string report_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["phase"] = to_string(r.phase);
  j["metric"] = r.metric_name;
  j["batch_size"] = r.batch_size;
  j["train_samples"] = r.train_samples;
  j["val_samples"] = r.val_samples;
  auto& ep = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : r.epochs)
    ep.push_back({{"epoch", e.epoch},
                  {"lr", e.lr},
                  {"train_loss", e.train_loss},
                  {"val_loss", e.val_loss},
                  {"val_metric", e.val_metric},
                  {"seconds", e.seconds}});
  auto& cv = j["curve"] = nlohmann::ordered_json::array();
  for (const auto& p : r.curve) cv.push_back({{"global_step", p.step}, {"validation_loss", p.val_loss}});
  j["summary"] = r.summary;
  j["checkpoint"] = r.checkpoint_path;
  j["seconds"] = r.seconds;
  return j.dump(2) + "\n";
}

#define CGAP2_INSTANTIATE_TRAINING(T)                                                                            \
  template void sgd_step(std::vector<Parameter<T>>&, const OptimConfig&, double);                                \
  template void prepare_phase(Cgap2Model<T>&, Phase);                                                            \
  template TrainReport pretrain_encoder(Cgap2Model<T>&, const synth::Dataset&, const OptimConfig&,               \
                                        const EpochCallback&);                                                   \
  template TrainReport train_pose_phase(Cgap2Model<T>&, const synth::Dataset&, const OptimConfig&,               \
                                        const EpochCallback&);                                                   \
  template TrainReport train_classifier_phase(Cgap2Model<T>&, const synth::Dataset&, const OptimConfig&,         \
                                              const EpochCallback&);                                             \
  template void normalize_frame(std::span<const std::uint8_t>, T*);                                              \
  template PoseEvaluation evaluate_pose(Cgap2Model<T>&, const synth::Dataset&, const std::vector<WindowRef>&);   \
  template ClassEvaluation evaluate_classifier(Cgap2Model<T>&, const synth::Dataset&, const std::vector<WindowRef>&);

CGAP2_INSTANTIATE_TRAINING(float)
CGAP2_INSTANTIATE_TRAINING(double)

}  // namespace cgap2
