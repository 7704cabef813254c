#include "cgap2/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "cgap2/error.hpp"

namespace cgap2 {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Encoder: return "encoder";
    case Stage::Temporal: return "temporal";
    case Stage::Decoder: return "decoder";
    case Stage::Classifier: return "classifier";
  }
  return "?";
}

std::optional<Stage> parse_stage(const std::string& name) {
  for (auto s : kAllStages)
    if (name == to_string(s)) return s;
  require(name == "all", ErrorKind::Usage, "unknown stage '" + name + "'");
  return std::nullopt;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.image_size = 256;
  c.feature_spatial = 8;
  c.feature_channels = 2048;
  c.bottleneck_channels = 512;
  c.heatmap_size = 64;
  c.num_classes = 15;
  c.fc_dims = {4096, 2048};
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.image_size = 16;
  c.feature_spatial = 2;
  c.feature_channels = 8;
  c.bottleneck_channels = 4;
  c.heatmap_size = 4;
  c.context_n = 3;
  c.gap_g = 2;
  c.num_classes = 3;
  c.fc_dims = {6, 5};
  c.classifier_conv_channels = 2;
  return c;
}

namespace {

// Number of halvings from `from` down to `to`; fails unless it is a power of two.
std::size_t log2_ratio(std::size_t from, std::size_t to, const char* what) {
  require(to > 0 && from >= to && from % to == 0, ErrorKind::Config,
          std::string(what) + ": sizes must divide (" + std::to_string(from) + " vs " + std::to_string(to) + ")");
  std::size_t r = from / to, n = 0;
  while (r > 1) {
    require(r % 2 == 0, ErrorKind::Config, std::string(what) + ": size ratio must be a power of two");
    r /= 2;
    ++n;
  }
  return n;
}

}  // namespace

std::size_t ModelConfig::encoder_stages() const { return log2_ratio(image_size, feature_spatial, "encoder"); }
std::size_t ModelConfig::decoder_stages() const { return log2_ratio(heatmap_size, feature_spatial, "decoder"); }

std::size_t ModelConfig::decoder_width(std::size_t stage) const {
  std::size_t ch = feature_channels;
  for (std::size_t i = 0; i <= stage; ++i) ch = std::max(ch / 2, std::min(ch, decoder_min_channels));
  return ch;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) { require(ok, ErrorKind::Config, "model config: " + msg); };
  need(num_joints == 17, "num_joints must be 17");
  need(image_size > 0 && feature_spatial > 0 && image_size % feature_spatial == 0,
       "feature_spatial must divide image_size");
  const std::size_t es = encoder_stages();
  need(es >= 1, "image_size must exceed feature_spatial");
  need(feature_channels % (std::size_t(1) << (es - 1)) == 0 && feature_channels >> (es - 1) >= 1,
       "feature_channels must be divisible by 2^(encoder stages - 1)");
  const std::size_t ds = decoder_stages();
  need(ds == 0 || feature_channels >> ds >= 1, "feature_channels too small for the decoder stages");
  need(bottleneck_channels >= 1, "bottleneck_channels must be positive");
  need(context_n >= 1 && gap_g >= 1 && k_value >= 1, "context, gap and k must be positive");
  need(k_value <= context_n, "k must not exceed the context length (temporal reduction kernel n-k+1)");
  need(temporal_depth >= 1 && temporal_depth <= 8, "temporal_depth must lie in [1, 8]");
  need(!has_pool_block() || feature_spatial % 2 == 0, "pooling needs an even feature_spatial");
  need(num_classes >= 2, "num_classes must be at least 2");
  need(fc_dims[0] >= 1 && fc_dims[1] >= 1 && classifier_conv_channels >= 1, "classifier sizes must be positive");
  need(volume_half_extent_mm > 0, "volume_half_extent_mm must be positive");
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> out;
  auto he = [](std::size_t fan_in) { return std::sqrt(6.0 / double(fan_in)); };      // followed by relu
  auto lecun = [](std::size_t fan_in) { return std::sqrt(3.0 / double(fan_in)); };   // linear output
  auto layer = [&](const std::string& name, Stage st, Shape wshape, double bound, InitKind wk = InitKind::Uniform) {
    const std::size_t out_ch = wshape[0];
    out.push_back({name + ".weight", st, std::move(wshape), wk, bound});
    out.push_back({name + ".bias", st, Shape{out_ch}, InitKind::Zero, 0.0});
  };

  const std::size_t F = c.feature_channels, B = c.bottleneck_channels;
  const std::size_t es = c.encoder_stages();
  std::size_t in = 3;
  for (std::size_t i = 0; i < es; ++i) {
    const std::size_t width = F >> (es - 1 - i);
    const std::string p = "encoder.stage" + std::to_string(i);
    layer(p + ".down", Stage::Encoder, {width, in, 3, 3}, he(in * 9));
    layer(p + ".conv", Stage::Encoder, {width, width, 3, 3}, 0.5 * he(width * 9));
    in = width;
  }

  layer("temporal.bottleneck", Stage::Temporal, {B, F, 1, 1, 1}, he(F));
  for (std::size_t i = 0; i < c.temporal_depth; ++i) {
    layer("temporal.conv" + std::to_string(i), Stage::Temporal, {B, B, 3, 3, 3}, he(B * 27));
    if (i == 1 && c.has_pool_block()) {
      out.push_back({"temporal.bn.gamma", Stage::Temporal, {B}, InitKind::One, 0.0});
      out.push_back({"temporal.bn.beta", Stage::Temporal, {B}, InitKind::Zero, 0.0});
    }
  }
  layer("temporal.expand", Stage::Temporal, {F, B, 1, 1, 1}, lecun(B));
  const std::size_t taps = c.context_n - c.k_value + 1;
  layer("temporal.reduce", Stage::Temporal, {F, F, taps, 1, 1}, lecun(F * taps));

  const std::size_t dstages = c.decoder_stages();
  std::size_t ch = F;
  for (std::size_t i = 0; i < dstages; ++i) {
    const std::size_t next = c.decoder_width(i);
    layer("decoder.stage" + std::to_string(i), Stage::Decoder, {next, ch, 3, 3}, he(ch * 9));
    ch = next;
  }
  layer("decoder.head", Stage::Decoder, {c.num_joints * c.heatmap_size, ch, 1, 1}, 0.0, InitKind::Zero);

  const std::size_t T = c.context_n + c.k_value, s = c.feature_spatial;
  layer("classifier.conv", Stage::Classifier, {c.classifier_conv_channels, F, 3, 3, 3}, he(F * 27));
  const std::size_t flat = c.classifier_conv_channels * T * s * s;
  layer("classifier.fc0", Stage::Classifier, {c.fc_dims[0], flat}, he(flat));
  layer("classifier.fc1", Stage::Classifier, {c.fc_dims[1], c.fc_dims[0]}, he(c.fc_dims[0]));
  layer("classifier.out", Stage::Classifier, {c.num_classes, c.fc_dims[1]}, lecun(c.fc_dims[1]));
  return out;
}

std::size_t count_parameters(const ModelConfig& config, std::optional<Stage> stage) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(config))
    if (!stage || p.stage == *stage) n += shape_numel(p.shape);
  return n;
}

template <typename T>
Cgap2Model<T>::Cgap2Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config), bn_(config.bottleneck_channels) {
  std::mt19937_64 rng(seed);
  for (const auto& spec : parameter_layout(config_)) {
    Tensor<T> v(spec.shape);
    switch (spec.init) {
      case InitKind::Uniform: {
        std::uniform_real_distribution<double> u(-spec.bound, spec.bound);
        for (std::size_t i = 0; i < v.numel(); ++i) v[i] = T(u(rng));
        break;
      }
      case InitKind::One:
        for (std::size_t i = 0; i < v.numel(); ++i) v[i] = T(1);
        break;
      case InitKind::Zero: break;
    }
    index_[spec.name] = params_.size();
    params_.emplace_back(spec.name, std::move(v));
    stages_.push_back(spec.stage);
  }
  const double ext = config_.volume_half_extent_mm, step = 2.0 * ext / double(config_.heatmap_size);
  // Heatmap voxel axes are (d, h, w); x follows w, y follows h, z follows d.
  volume_.source_axis = {2, 1, 0};
  volume_.scale = {step, step, step};
  for (std::size_t c = 0; c < 3; ++c) volume_.offset[c] = config_.volume_center_mm[c] - ext + 0.5 * step;
}

template <typename T>
Parameter<T>& Cgap2Model<T>::parameter(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::Usage, "model has no parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
const Parameter<T>& Cgap2Model<T>::parameter(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::Usage, "model has no parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
Stage Cgap2Model<T>::stage_of(const Parameter<T>& p) const {
  return stages_[index_.at(p.name)];
}

template <typename T>
std::vector<Parameter<T>*> Cgap2Model<T>::stage_parameters(Stage stage) {
  std::vector<Parameter<T>*> out;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (stages_[i] == stage) out.push_back(&params_[i]);
  return out;
}

template <typename T>
void Cgap2Model<T>::set_stage_frozen(Stage stage, bool frozen) {
  for (auto* p : stage_parameters(stage)) p->set_frozen(frozen);
}

template <typename T>
bool Cgap2Model<T>::stage_frozen(Stage stage) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (stages_[i] == stage && !params_[i].frozen) return false;
  return true;
}

template <typename T>
std::size_t Cgap2Model<T>::count_parameters(std::optional<Stage> stage) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!stage || stages_[i] == *stage) n += params_[i].numel();
  return n;
}

template <typename T>
Tensor<T> Cgap2Model<T>::encode(const Tensor<T>& images) const {
  const std::size_t S = config_.image_size;
  require(images.rank() == 4 && images.dim(1) == 3 && images.dim(2) == S && images.dim(3) == S, ErrorKind::Shape,
          "encoder: expected [M,3," + std::to_string(S) + "," + std::to_string(S) + "], got " +
              shape_str(images.shape()));
  Tensor<T> x = images;
  for (std::size_t i = 0; i < config_.encoder_stages(); ++i) {
    const std::string p = "encoder.stage" + std::to_string(i);
    x = relu(conv2d(x, w(p + ".down.weight"), w(p + ".down.bias"), {2, 2}, {1, 1}));
    auto y = conv2d(x, w(p + ".conv.weight"), w(p + ".conv.bias"), {1, 1}, {1, 1});
    x = relu(add(x, y));
  }
  return x;
}

template <typename T>
Tensor<T> Cgap2Model<T>::temporal(const Tensor<T>& features, NormMode mode) {
  const std::size_t F = config_.feature_channels, s = config_.feature_spatial;
  require(features.rank() == 5 && features.dim(1) == F && features.dim(2) == config_.context_n &&
              features.dim(3) == s && features.dim(4) == s,
          ErrorKind::Shape, "temporal: expected [N," + std::to_string(F) + "," + std::to_string(config_.context_n) +
                                "," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                                shape_str(features.shape()));
  const Triple one{1, 1, 1}, none{0, 0, 0};
  auto x = relu(conv3d(features, w("temporal.bottleneck.weight"), w("temporal.bottleneck.bias"), one, none));
  for (std::size_t i = 0; i < config_.temporal_depth; ++i) {
    const std::string p = "temporal.conv" + std::to_string(i);
    x = relu(conv3d(x, w(p + ".weight"), w(p + ".bias"), one, one));
    if (i == 1 && config_.has_pool_block()) {
      x = maxpool3d(x, {1, 2, 2}, {1, 2, 2});
      x = batchnorm3d(x, w("temporal.bn.gamma"), w("temporal.bn.beta"), bn_, mode);
      x = upsample_nearest3d(x, {1, 2, 2});
    }
  }
  x = conv3d(x, w("temporal.expand.weight"), w("temporal.expand.bias"), one, none);
  return conv3d(x, w("temporal.reduce.weight"), w("temporal.reduce.bias"), one, none);
}

template <typename T>
Tensor<T> Cgap2Model<T>::decode(const Tensor<T>& features) const {
  const std::size_t F = config_.feature_channels, s = config_.feature_spatial;
  require(features.rank() == 4 && features.dim(1) == F && features.dim(2) == s && features.dim(3) == s,
          ErrorKind::Shape, "decoder: expected [M," + std::to_string(F) + "," + std::to_string(s) + "," +
                                std::to_string(s) + "], got " + shape_str(features.shape()));
  const std::size_t M = features.dim(0);
  Tensor<T> x = features;
  for (std::size_t i = 0; i < config_.decoder_stages(); ++i) {
    const std::size_t C = x.dim(1), h = x.dim(2);
    x = reshape(upsample_nearest3d(reshape(x, {M, C, 1, h, h}), {1, 2, 2}), {M, C, 2 * h, 2 * h});
    const std::string p = "decoder.stage" + std::to_string(i);
    x = relu(conv2d(x, w(p + ".weight"), w(p + ".bias"), {1, 1}, {1, 1}));
  }
  x = conv2d(x, w("decoder.head.weight"), w("decoder.head.bias"), {1, 1}, {0, 0});
  const std::size_t Hd = config_.heatmap_size;
  return reshape(x, {M, config_.num_joints, Hd, Hd, Hd});
}

template <typename T>
Tensor<T> Cgap2Model<T>::heatmaps_to_pose(const Tensor<T>& heatmaps) const {
  return soft_argmax3d(heatmaps, volume_);
}

template <typename T>
Tensor<T> Cgap2Model<T>::classify_features(const Tensor<T>& history, const Tensor<T>& predicted) const {
  const std::size_t F = config_.feature_channels, s = config_.feature_spatial;
  const std::size_t n = config_.context_n, k = config_.k_value;
  auto expect = [&](const Tensor<T>& t, std::size_t len, const char* what) {
    require(t.rank() == 5 && t.dim(1) == F && t.dim(2) == len && t.dim(3) == s && t.dim(4) == s, ErrorKind::Shape,
            std::string("classifier: ") + what + " features must be [N," + std::to_string(F) + "," +
                std::to_string(len) + "," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                shape_str(t.shape()));
  };
  expect(history, n, "historical");
  expect(predicted, k, "predicted");
  require(history.dim(0) == predicted.dim(0), ErrorKind::Shape, "classifier: batch sizes differ");
  auto x = concat(history, predicted, 2);
  require(x.dim(2) == n + k, ErrorKind::Shape, "classifier: expected n+k time slices after concatenation");
  x = relu(conv3d(x, w("classifier.conv.weight"), w("classifier.conv.bias"), {1, 1, 1}, {1, 1, 1}));
  const std::size_t N = x.dim(0);
  x = reshape(x, {N, x.numel() / N});
  x = relu(linear(x, w("classifier.fc0.weight"), w("classifier.fc0.bias")));
  x = relu(linear(x, w("classifier.fc1.weight"), w("classifier.fc1.bias")));
  return linear(x, w("classifier.out.weight"), w("classifier.out.bias"));
}

template <typename T>
Tensor<T> Cgap2Model<T>::frames_to_clip(const Tensor<T>& f, std::size_t windows) const {
  require(f.rank() == 4 && windows > 0 && f.dim(0) % windows == 0, ErrorKind::Shape,
          "frames_to_clip: frame count is not a multiple of the window count");
  const std::size_t t = f.dim(0) / windows;
  return permute(reshape(f, {windows, t, f.dim(1), f.dim(2), f.dim(3)}), {0, 2, 1, 3, 4});
}

template <typename T>
Tensor<T> Cgap2Model<T>::clip_to_frames(const Tensor<T>& clip) const {
  require(clip.rank() == 5, ErrorKind::Shape, "clip_to_frames: expected rank 5");
  auto p = permute(clip, {0, 2, 1, 3, 4});
  return reshape(p, {clip.dim(0) * clip.dim(2), clip.dim(1), clip.dim(3), clip.dim(4)});
}

template <typename T>
Tensor<T> Cgap2Model<T>::predict_pose(const Tensor<T>& windows, NormMode mode) {
  const std::size_t S = config_.image_size, n = config_.context_n;
  require(windows.rank() == 5 && windows.dim(1) == n && windows.dim(2) == 3 && windows.dim(3) == S &&
              windows.dim(4) == S,
          ErrorKind::Shape, "predict_pose: expected [N," + std::to_string(n) + ",3," + std::to_string(S) + "," +
                                std::to_string(S) + "], got " + shape_str(windows.shape()));
  const std::size_t N = windows.dim(0);
  auto enc = encode(reshape(windows, {N * n, 3, S, S}));
  auto pred = temporal(frames_to_clip(enc, N), mode);
  auto pose = heatmaps_to_pose(decode(clip_to_frames(pred)));
  return reshape(pose, {N, config_.k_value, config_.num_joints, 3});
}

template <typename T>
Tensor<T> Cgap2Model<T>::classify(const Tensor<T>& windows, bool historical_only) {
  const std::size_t S = config_.image_size, n = config_.context_n;
  require(windows.rank() == 5 && windows.dim(1) == n && windows.dim(2) == 3 && windows.dim(3) == S &&
              windows.dim(4) == S,
          ErrorKind::Shape, "classify: expected [N," + std::to_string(n) + ",3," + std::to_string(S) + "," +
                                std::to_string(S) + "], got " + shape_str(windows.shape()));
  const std::size_t N = windows.dim(0);
  auto clip = frames_to_clip(encode(reshape(windows, {N * n, 3, S, S})), N);
  Tensor<T> pred;
  if (historical_only) {
    pred = Tensor<T>({N, config_.feature_channels, config_.k_value, config_.feature_spatial, config_.feature_spatial});
  } else {
    pred = temporal(clip, NormMode::Eval);
  }
  return classify_features(clip, pred);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'G', 'A', 'P', '2', 'C', 'K', 'P'};

struct NamedArray {
  Shape shape;
  std::vector<float> values;
};

void put_u32(std::ostream& o, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) o.put(char((v >> (8 * b)) & 0xFF));
}
void put_u64(std::ostream& o, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) o.put(char((v >> (8 * b)) & 0xFF));
}

std::uint64_t get_le(std::istream& in, int bytes, const std::string& path) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) {
    const int c = in.get();
    require(c != EOF, ErrorKind::Checkpoint, "checkpoint " + path + " is truncated");
    v |= std::uint64_t(std::uint8_t(c)) << (8 * b);
  }
  return v;
}

template <typename T>
std::vector<std::pair<std::string, NamedArray>> checkpoint_entries(const Cgap2Model<T>& m) {
  std::vector<std::pair<std::string, NamedArray>> out;
  for (const auto& p : m.parameters()) {
    NamedArray a{p.value.shape(), {}};
    for (auto v : p.value.data()) a.values.push_back(float(v));
    out.emplace_back(p.name, std::move(a));
  }
  if (m.config().has_pool_block()) {
    const auto& bn = m.batchnorm_state();
    const Shape s{bn.running_mean.size()};
    out.emplace_back("temporal.bn.running_mean",
                     NamedArray{s, std::vector<float>(bn.running_mean.begin(), bn.running_mean.end())});
    out.emplace_back("temporal.bn.running_var",
                     NamedArray{s, std::vector<float>(bn.running_var.begin(), bn.running_var.end())});
  }
  out.emplace_back("meta.completed_phase", NamedArray{Shape{1}, {float(m.completed_phase)}});
  return out;
}

}  // namespace

template <typename T>
void save_checkpoint(const Cgap2Model<T>& model, const std::filesystem::path& path) {
  std::ofstream o(path, std::ios::binary);
  require(bool(o), ErrorKind::Checkpoint, "cannot write checkpoint " + path.string());
  o.write(kMagic, sizeof kMagic);
  put_u32(o, kCheckpointVersion);
  for (const auto& [name, arr] : checkpoint_entries(model)) {
    put_u32(o, std::uint32_t(name.size()));
    o.write(name.data(), std::streamsize(name.size()));
    put_u32(o, std::uint32_t(arr.shape.size()));
    for (auto d : arr.shape) put_u64(o, d);
    for (float v : arr.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(o, bits);
    }
  }
  require(bool(o), ErrorKind::Checkpoint, "short write to checkpoint " + path.string());
}

template <typename T>
void load_checkpoint(Cgap2Model<T>& model, const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::Checkpoint, "cannot open checkpoint " + where);
  char magic[8];
  in.read(magic, 8);
  require(in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0, ErrorKind::Checkpoint,
          where + " is not a CGAP2 checkpoint");
  const auto version = std::uint32_t(get_le(in, 4, where));
  require(version == kCheckpointVersion, ErrorKind::Checkpoint,
          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");

  std::map<std::string, NamedArray> found;
  while (in.peek() != EOF) {
    const auto len = get_le(in, 4, where);
    require(len > 0 && len < 4096, ErrorKind::Checkpoint, where + ": implausible tensor name length");
    std::string name(len, '\0');
    in.read(name.data(), std::streamsize(len));
    require(std::uint64_t(in.gcount()) == len, ErrorKind::Checkpoint, where + " is truncated");
    const auto rank = get_le(in, 4, where);
    require(rank <= 8, ErrorKind::Checkpoint, where + ": implausible rank for " + name);
    NamedArray a;
    for (std::uint64_t r = 0; r < rank; ++r) a.shape.push_back(std::size_t(get_le(in, 8, where)));
    const std::size_t n = shape_numel(a.shape);
    require(n < (std::size_t(1) << 34), ErrorKind::Checkpoint, where + ": implausible size for " + name);
    a.values.resize(n);
    for (auto& v : a.values) {
      const auto bits = std::uint32_t(get_le(in, 4, where));
      std::memcpy(&v, &bits, 4);
    }
    require(found.emplace(name, std::move(a)).second, ErrorKind::Checkpoint, where + ": duplicate tensor " + name);
  }

  // Validate everything before touching the model.
  const auto expected = checkpoint_entries(model);
  for (const auto& [name, arr] : expected) {
    auto it = found.find(name);
    require(it != found.end(), ErrorKind::Checkpoint, where + ": missing tensor " + name);
    require(it->second.shape == arr.shape, ErrorKind::Checkpoint,
            where + ": tensor " + name + " has shape " + shape_str(it->second.shape) + ", model expects " +
                shape_str(arr.shape));
  }
  require(found.size() == expected.size(), ErrorKind::Checkpoint,
          where + ": contains tensors this model does not have");

  for (auto& p : model.parameters()) {
    const auto& src = found.at(p.name).values;
    for (std::size_t i = 0; i < src.size(); ++i) p.value[i] = T(src[i]);
    p.value.zero_grad();
    std::fill(p.momentum_buffer.begin(), p.momentum_buffer.end(), T(0));
  }
  if (model.config().has_pool_block()) {
    auto& bn = model.batchnorm_state();
    const auto& m = found.at("temporal.bn.running_mean").values;
    const auto& v = found.at("temporal.bn.running_var").values;
    for (std::size_t c = 0; c < m.size(); ++c) bn.running_mean[c] = T(m[c]), bn.running_var[c] = T(v[c]);
  }
  model.completed_phase = int(found.at("meta.completed_phase").values[0]);
}

template class Cgap2Model<float>;
template class Cgap2Model<double>;
template void save_checkpoint(const Cgap2Model<float>&, const std::filesystem::path&);
template void save_checkpoint(const Cgap2Model<double>&, const std::filesystem::path&);
template void load_checkpoint(Cgap2Model<float>&, const std::filesystem::path&);
template void load_checkpoint(Cgap2Model<double>&, const std::filesystem::path&);

}  // namespace cgap2
