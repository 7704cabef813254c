#pragma once

// The CGAP2 network: per-frame 2D encoder, 3D temporal module that maps n
// historical feature maps to k future ones, 2D decoder to volumetric joint
// heatmaps, and a shallow classifier over historical plus predicted features.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgap2/ops.hpp"
#include "cgap2/sampler.hpp"
#include "cgap2/tensor.hpp"

namespace cgap2 {

enum class Stage { Encoder, Temporal, Decoder, Classifier };
inline constexpr std::array<Stage, 4> kAllStages = {Stage::Encoder, Stage::Temporal, Stage::Decoder,
                                                    Stage::Classifier};
const char* to_string(Stage s);
/// Accepts "encoder", "temporal", "decoder", "classifier"; nullopt for "all".
std::optional<Stage> parse_stage(const std::string& name);

struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t feature_spatial = 4;
  std::size_t feature_channels = 64;
  std::size_t bottleneck_channels = 16;
  std::size_t heatmap_size = 16;
  std::size_t num_joints = 17;
  std::size_t context_n = 5;
  std::size_t gap_g = 15;
  std::size_t k_value = 1;
  std::size_t num_classes = 6;
  std::array<std::size_t, 2> fc_dims{128, 64};
  std::size_t classifier_conv_channels = 16;
  // Number of 3x3x3 convolutions in the temporal module. The first two run
  // before the pool/normalize/upsample block, the rest after it; the block
  // itself exists only from three convolutions up. Four is the reference layout.
  std::size_t temporal_depth = 4;
  // Decoder stages halve the channel count but never below this floor (or
  // below their input width when that is smaller).
  std::size_t decoder_min_channels = 32;
  // Cube in pose space covered by the heatmap volume (millimeters).
  std::array<double, 3> volume_center_mm{0.0, 0.0, 4500.0};
  double volume_half_extent_mm = 1100.0;

  static ModelConfig desk();
  /// Channel and spatial sizes of the published model (never trained here).
  static ModelConfig paper();
  /// Small enough for an end-to-end finite-difference check.
  static ModelConfig tiny();

  SamplerConfig sampler() const { return SamplerConfig{context_n, gap_g, k_value, 0}; }
  std::size_t encoder_stages() const;
  std::size_t decoder_stages() const;
  /// Output channels of decoder stage `stage`.
  std::size_t decoder_width(std::size_t stage) const;
  bool has_pool_block() const { return temporal_depth >= 3; }
  void validate() const;
};

enum class InitKind { Uniform, Zero, One };

struct ParamSpec {
  std::string name;
  Stage stage;
  Shape shape;
  InitKind init = InitKind::Uniform;
  double bound = 0.0;  // half-width of the uniform init
};

/// Every trainable tensor in construction order.
std::vector<ParamSpec> parameter_layout(const ModelConfig& config);

/// Number of trainable scalars in one stage (nullopt = whole model). Frozen
/// parameters count; they still exist.
std::size_t count_parameters(const ModelConfig& config, std::optional<Stage> stage = std::nullopt);

template <typename T>
class Cgap2Model {
 public:
  Cgap2Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// [M,3,S,S] -> [M,F,s,s]; frames are processed independently.
  Tensor<T> encode(const Tensor<T>& images) const;
  /// [N,F,n,s,s] -> [N,F,k,s,s]. Train mode uses batch statistics and updates
  /// the running ones.
  Tensor<T> temporal(const Tensor<T>& features, NormMode mode);
  /// [M,F,s,s] -> [M,J,Hd,Hd,Hd]
  Tensor<T> decode(const Tensor<T>& features) const;
  /// [M,J,Hd,Hd,Hd] -> [M,J,3] millimeters.
  Tensor<T> heatmaps_to_pose(const Tensor<T>& heatmaps) const;
  /// Logits [N,classes] from historical [N,F,n,s,s] and predicted [N,F,k,s,s] features.
  Tensor<T> classify_features(const Tensor<T>& history, const Tensor<T>& predicted) const;

  /// Windows [N,n,3,S,S] -> future poses [N,k,J,3].
  Tensor<T> predict_pose(const Tensor<T>& windows, NormMode mode = NormMode::Eval);
  /// Windows [N,n,3,S,S] -> logits [N,classes]. With `historical_only` the
  /// predicted features are replaced by zeros.
  Tensor<T> classify(const Tensor<T>& windows, bool historical_only = false);

  /// [N*n,F,s,s] (window-major) -> [N,F,n,s,s]
  Tensor<T> frames_to_clip(const Tensor<T>& frame_features, std::size_t windows) const;
  /// [N,F,k,s,s] -> [N*k,F,s,s]
  Tensor<T> clip_to_frames(const Tensor<T>& clip) const;

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::vector<Parameter<T>*> stage_parameters(Stage stage);
  Parameter<T>& parameter(const std::string& name);
  const Parameter<T>& parameter(const std::string& name) const;
  Stage stage_of(const Parameter<T>& p) const;

  void set_stage_frozen(Stage stage, bool frozen);
  /// True when every parameter of the stage is frozen.
  bool stage_frozen(Stage stage) const;

  BatchNormState<T>& batchnorm_state() { return bn_; }
  const BatchNormState<T>& batchnorm_state() const { return bn_; }

  /// Number of trainable scalars actually allocated.
  std::size_t count_parameters(std::optional<Stage> stage = std::nullopt) const;

  /// Highest training phase completed on these weights (-1: none).
  int completed_phase = -1;

 private:
  const Tensor<T>& w(const std::string& name) const { return parameter(name).value; }

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::vector<Stage> stages_;
  std::map<std::string, std::size_t> index_;
  BatchNormState<T> bn_;
  VolumeTransform volume_;
};

using Model32 = Cgap2Model<float>;
using Model64 = Cgap2Model<double>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint: "CGAP2CKP", u32 version, then per named tensor a u32
/// name length, the name bytes, u32 rank, u64 dims, and a little-endian f32
/// row-major payload. Parameters, batchnorm running statistics and the
/// completed phase are stored.
template <typename T>
void save_checkpoint(const Cgap2Model<T>& model, const std::filesystem::path& path);

/// Loads into a model built from a matching config. Unknown versions,
/// missing or unexpected tensors and shape mismatches are rejected before any
/// weight is modified.
template <typename T>
void load_checkpoint(Cgap2Model<T>& model, const std::filesystem::path& path);

}  // namespace cgap2
