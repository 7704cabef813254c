#include "cgap2/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cgap2/metrics.hpp"
#include "json.hpp"

namespace cgap2 {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration <-> JSON
// ---------------------------------------------------------------------------

namespace {

json to_j(const synth::DatasetConfig& c) {
  return {{"num_classes", c.num_classes},
          {"sequences_per_class", c.sequences_per_class},
          {"length", c.length},
          {"image_size", c.image_size},
          {"num_cameras", c.num_cameras},
          {"seed", c.seed},
          {"peak_time_fraction", c.peak_time_fraction},
          {"divergence_width", c.divergence_width},
          {"train_fraction", c.train_fraction},
          {"clutter", c.clutter},
          {"ambiguity_threshold_mm", c.ambiguity_threshold_mm},
          {"separation_threshold_mm", c.separation_threshold_mm}};
}

json to_j(const ModelConfig& c) {
  return {{"image_size", c.image_size},
          {"feature_spatial", c.feature_spatial},
          {"feature_channels", c.feature_channels},
          {"bottleneck_channels", c.bottleneck_channels},
          {"heatmap_size", c.heatmap_size},
          {"num_joints", c.num_joints},
          {"context_n", c.context_n},
          {"gap_g", c.gap_g},
          {"k_value", c.k_value},
          {"num_classes", c.num_classes},
          {"fc_dims", c.fc_dims},
          {"classifier_conv_channels", c.classifier_conv_channels},
          {"temporal_depth", c.temporal_depth},
          {"decoder_min_channels", c.decoder_min_channels},
          {"volume_center_mm", c.volume_center_mm},
          {"volume_half_extent_mm", c.volume_half_extent_mm}};
}

// The optimizer seed is not listed: it always follows the run seed.
json to_j(const OptimConfig& c) {
  return {{"learning_rate", c.learning_rate},   {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},     {"lr_drop_epoch", c.lr_drop_epoch},
          {"lr_drop_factor", c.lr_drop_factor}, {"epochs", c.epochs},
          {"batch_size", c.batch_size},         {"samples_per_epoch", c.samples_per_epoch}};
}

json to_j(const AblationConfig& c) {
  return {{"gap_values", c.gap_values},
          {"context_values", c.context_values},
          {"context_gap", c.context_gap},
          {"arch_values", c.arch_values},
          {"arch_context", c.arch_context},
          {"arch_gap", c.arch_gap},
          {"sequences_per_class", c.sequences_per_class},
          {"extra_frames", c.extra_frames},
          {"pretrain", to_j(c.pretrain)},
          {"pose", to_j(c.pose)},
          {"pretrained_checkpoint", c.pretrained_checkpoint}};
}

json to_j(const RunConfig& c) {
  return {{"seed", c.seed},
          {"out_dir", c.out_dir},
          {"dataset_dir", c.dataset_dir},
          {"dataset", to_j(c.dataset)},
          {"model", to_j(c.model)},
          {"pretrain", to_j(c.pretrain)},
          {"pose", to_j(c.pose)},
          {"classifier", to_j(c.classifier)},
          {"ablation", to_j(c.ablation)},
          {"stream", {{"sequence", c.stream.sequence}, {"hop", c.stream.hop}}}};
}

template <typename V>
void get(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

void from_j(const json& j, synth::DatasetConfig& c) {
  get(j, "num_classes", c.num_classes);
  get(j, "sequences_per_class", c.sequences_per_class);
  get(j, "length", c.length);
  get(j, "image_size", c.image_size);
  get(j, "num_cameras", c.num_cameras);
  get(j, "seed", c.seed);
  get(j, "peak_time_fraction", c.peak_time_fraction);
  get(j, "divergence_width", c.divergence_width);
  get(j, "train_fraction", c.train_fraction);
  get(j, "clutter", c.clutter);
  get(j, "ambiguity_threshold_mm", c.ambiguity_threshold_mm);
  get(j, "separation_threshold_mm", c.separation_threshold_mm);
}

void from_j(const json& j, ModelConfig& c) {
  get(j, "image_size", c.image_size);
  get(j, "feature_spatial", c.feature_spatial);
  get(j, "feature_channels", c.feature_channels);
  get(j, "bottleneck_channels", c.bottleneck_channels);
  get(j, "heatmap_size", c.heatmap_size);
  get(j, "num_joints", c.num_joints);
  get(j, "context_n", c.context_n);
  get(j, "gap_g", c.gap_g);
  get(j, "k_value", c.k_value);
  get(j, "num_classes", c.num_classes);
  get(j, "fc_dims", c.fc_dims);
  get(j, "classifier_conv_channels", c.classifier_conv_channels);
  get(j, "temporal_depth", c.temporal_depth);
  get(j, "decoder_min_channels", c.decoder_min_channels);
  get(j, "volume_center_mm", c.volume_center_mm);
  get(j, "volume_half_extent_mm", c.volume_half_extent_mm);
}

void from_j(const json& j, OptimConfig& c) {
  get(j, "learning_rate", c.learning_rate);
  get(j, "momentum", c.momentum);
  get(j, "weight_decay", c.weight_decay);
  get(j, "lr_drop_epoch", c.lr_drop_epoch);
  get(j, "lr_drop_factor", c.lr_drop_factor);
  get(j, "epochs", c.epochs);
  get(j, "batch_size", c.batch_size);
  get(j, "samples_per_epoch", c.samples_per_epoch);
}

void from_j(const json& j, AblationConfig& c) {
  get(j, "gap_values", c.gap_values);
  get(j, "context_values", c.context_values);
  get(j, "context_gap", c.context_gap);
  get(j, "arch_values", c.arch_values);
  get(j, "arch_context", c.arch_context);
  get(j, "arch_gap", c.arch_gap);
  get(j, "sequences_per_class", c.sequences_per_class);
  get(j, "extra_frames", c.extra_frames);
  if (j.contains("pretrain")) from_j(j.at("pretrain"), c.pretrain);
  if (j.contains("pose")) from_j(j.at("pose"), c.pose);
  get(j, "pretrained_checkpoint", c.pretrained_checkpoint);
}

void from_j(const json& j, RunConfig& c) {
  get(j, "seed", c.seed);
  get(j, "out_dir", c.out_dir);
  get(j, "dataset_dir", c.dataset_dir);
  if (j.contains("dataset")) from_j(j.at("dataset"), c.dataset);
  if (j.contains("model")) from_j(j.at("model"), c.model);
  if (j.contains("pretrain")) from_j(j.at("pretrain"), c.pretrain);
  if (j.contains("pose")) from_j(j.at("pose"), c.pose);
  if (j.contains("classifier")) from_j(j.at("classifier"), c.classifier);
  if (j.contains("ablation")) from_j(j.at("ablation"), c.ablation);
  if (j.contains("stream")) {
    get(j.at("stream"), "sequence", c.stream.sequence);
    get(j.at("stream"), "hop", c.stream.hop);
  }
}

// Every key of `given` must exist in `known`, recursively through objects.
void reject_unknown(const json& given, const json& known, const std::string& where) {
  require(given.is_object(), ErrorKind::Config, "run config: '" + where + "' must be an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    require(known.contains(it.key()), ErrorKind::Config, "run config: unknown key '" + path + "'");
    if (known.at(it.key()).is_object()) reject_unknown(it.value(), known.at(it.key()), path);
  }
}

}  // namespace

RunConfig RunConfig::desk() {
  RunConfig c;
  // Phase 0 stands in for pretrained weights: a tenfold learning rate, a late
  // drop and a fixed frame budget per epoch.
  c.pretrain.learning_rate = 0.01;
  c.pretrain.lr_drop_epoch = 10;
  c.pretrain.samples_per_epoch = 1024;
  c.ablation.pretrain = c.pretrain;
  c.ablation.pretrain.epochs = 8;
  c.ablation.pretrain.lr_drop_epoch = 6;
  c.ablation.pretrain.samples_per_epoch = 512;
  c.ablation.pose.epochs = 6;
  c.ablation.pose.samples_per_epoch = 256;
  return c;
}

OptimConfig RunConfig::optim(Phase phase) const {
  OptimConfig o = phase == Phase::Pretrain ? pretrain : phase == Phase::Pose ? pose : classifier;
  o.seed = seed;
  return o;
}

void RunConfig::validate() const {
  model.validate();
  pretrain.validate();
  pose.validate();
  classifier.validate();
  ablation.pretrain.validate();
  ablation.pose.validate();
  require(stream.hop >= 1, ErrorKind::Config, "stream.hop must be at least 1");
  require(ablation.sequences_per_class >= 1, ErrorKind::Config, "ablation.sequences_per_class must be positive");
  require(dataset.num_classes == model.num_classes, ErrorKind::Config,
          "dataset.num_classes (" + std::to_string(dataset.num_classes) + ") differs from model.num_classes (" +
              std::to_string(model.num_classes) + ")");
  require(dataset.image_size == model.image_size, ErrorKind::Config,
          "dataset.image_size (" + std::to_string(dataset.image_size) + ") differs from model.image_size (" +
              std::to_string(model.image_size) + ")");
}

std::string run_config_json(const RunConfig& config) { return to_j(config).dump(2) + "\n"; }

RunConfig parse_run_config(const std::string& text) {
  RunConfig c = RunConfig::desk();
  try {
    const auto j = json::parse(text);
    reject_unknown(j, to_j(c), "");
    from_j(j, c);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::Usage, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void set_run_field(RunConfig& config, const std::string& dotted, const std::string& value) {
  json j = to_j(config);
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(node->is_object() && node->contains(key), ErrorKind::Usage, "unknown config field '" + dotted + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json v = json::parse(value, nullptr, false);
  if (v.is_discarded()) v = value;
  *node = v;
  try {
    RunConfig out = RunConfig::desk();
    from_j(j, out);
    config = out;
  } catch (const json::exception& e) {
    fail(ErrorKind::Usage, "bad value for '" + dotted + "': " + e.what());
  }
}

std::vector<std::size_t> parse_value_list(const std::string& csv) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = std::min(csv.find(',', start), csv.size());
    const std::string item = csv.substr(start, comma - start);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    require(!item.empty() && ec == std::errc() && p == item.data() + item.size() && v > 0, ErrorKind::Usage,
            "bad value list '" + csv + "' (expected positive integers separated by commas)");
    out.push_back(v);
    start = comma + 1;
  }
  return out;
}

std::string time_advantage(std::size_t gap) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", double(gap) / kFramesPerSecond);
  return buf;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void say(const LogFn& log, const std::string& line) {
  if (log) log(line);
}

fs::path require_out(const RunConfig& c) {
  require(!c.out_dir.empty(), ErrorKind::Usage, "no output directory (set out_dir or pass --out)");
  return c.out_dir;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream o(path, std::ios::binary);
  o << text;
  require(bool(o), ErrorKind::Data, "cannot write " + path.string());
}

// Refuses to replace results unless asked to.
void guard(const std::vector<fs::path>& outputs, bool overwrite) {
  if (overwrite) return;
  for (const auto& p : outputs)
    require(!fs::exists(p), ErrorKind::Usage, p.string() + " already exists (pass --overwrite to replace it)");
}

synth::Dataset acquire_dataset(const RunConfig& c, const LogFn& log) {
  if (!c.dataset_dir.empty()) {
    say(log, "loading dataset from " + c.dataset_dir);
    auto d = synth::load_dataset(c.dataset_dir);
    require(d.manifest.config.num_classes == c.model.num_classes, ErrorKind::Data,
            "dataset has " + std::to_string(d.manifest.config.num_classes) + " classes, model expects " +
                std::to_string(c.model.num_classes));
    require(d.manifest.config.image_size == c.model.image_size, ErrorKind::Data,
            "dataset image size " + std::to_string(d.manifest.config.image_size) + " does not match the model");
    return d;
  }
  say(log, "generating dataset (" + std::to_string(c.dataset.num_classes * c.dataset.sequences_per_class) +
               " sequences of " + std::to_string(c.dataset.length) + " frames)");
  return synth::generate_dataset(c.dataset);
}

fs::path checkpoint_path(const fs::path& out, Phase p) { return out / (std::string(to_string(p)) + ".ckpt"); }

std::vector<fs::path> phase_outputs(const fs::path& out, Phase p) {
  const std::string s = to_string(p);
  return {checkpoint_path(out, p), out / (s + "_report.csv"), out / (s + "_report.json"), out / (s + "_curve.csv")};
}

void write_phase(const fs::path& out, Phase p, TrainReport& r, const Model32& model) {
  const auto files = phase_outputs(out, p);
  save_checkpoint(model, files[0]);
  r.checkpoint_path = files[0].string();
  write_text(files[1], report_csv(r));
  write_text(files[2], report_json(r));
  write_text(files[3], curve_csv(r));
}

EpochCallback epoch_logger(const LogFn& log, const std::string& tag) {
  if (!log) return {};
  return [log, tag](const TrainReport& r, const EpochRecord& e) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "[%s] epoch %d lr %g train %.4f val %.4f %s %.4f (%.1fs)", tag.c_str(), e.epoch,
                  e.lr, e.train_loss, e.val_loss, r.metric_name.c_str(), e.val_metric, e.seconds);
    log(buf);
  };
}

TrainReport run_phase(Model32& model, const synth::Dataset& data, Phase p, const OptimConfig& o, const LogFn& log,
                      const std::string& tag) {
  prepare_phase(model, p);
  const auto cb = epoch_logger(log, tag);
  switch (p) {
    case Phase::Pretrain: return pretrain_encoder(model, data, o, cb);
    case Phase::Pose: return train_pose_phase(model, data, o, cb);
    case Phase::Classifier: return train_classifier_phase(model, data, o, cb);
  }
  fail(ErrorKind::Usage, "unknown phase");
}

json summary_json(const TrainReport& r) {
  json j;
  j["phase"] = to_string(r.phase);
  j["epochs"] = r.epochs.size();
  j["seconds"] = r.seconds;
  j["checkpoint"] = r.checkpoint_path;
  for (const auto& [k, v] : r.summary) j[k] = v;
  return j;
}

}  // namespace

std::string run_generate(const RunConfig& config, bool overwrite, const LogFn& log) {
  config.validate();
  const fs::path dir = !config.dataset_dir.empty() ? fs::path(config.dataset_dir)
                       : !config.out_dir.empty()   ? fs::path(config.out_dir) / "dataset"
                                                   : fs::path();
  require(!dir.empty(), ErrorKind::Usage, "no output path for the dataset (set dataset_dir or pass --out)");
  const auto t0 = Clock::now();
  const auto m = synth::build_dataset(config.dataset, dir, overwrite);
  if (!config.out_dir.empty()) write_text(fs::path(config.out_dir) / "config.json", run_config_json(config));
  std::size_t train = 0;
  for (const auto& s : m.sequences) train += s.split == synth::Split::Train;
  json j;
  j["command"] = "generate";
  j["dataset_dir"] = dir.string();
  j["classes"] = m.class_names;
  j["sequences"] = m.sequences.size();
  j["train_sequences"] = train;
  j["val_sequences"] = m.sequences.size() - train;
  j["length"] = config.dataset.length;
  j["seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  say(log, "wrote " + std::to_string(m.sequences.size()) + " sequences to " + dir.string());
  return j.dump(2);
}

std::string run_train(const RunConfig& config, const std::string& phase, bool overwrite, const LogFn& log) {
  config.validate();
  std::vector<Phase> phases;
  if (phase == "all")
    phases = {Phase::Pretrain, Phase::Pose, Phase::Classifier};
  else
    phases = {parse_phase(phase)};
  const fs::path out = require_out(config);
  for (auto p : phases) guard(phase_outputs(out, p), overwrite);

  Model32 model(config.model, config.seed);
  if (phases.front() != Phase::Pretrain) {
    const Phase prev = Phase(int(phases.front()) - 1);
    const auto ck = checkpoint_path(out, prev);
    require(fs::exists(ck), ErrorKind::Phase,
            std::string("phase '") + to_string(phases.front()) + "' needs the " + to_string(prev) +
                " checkpoint " + ck.string() + "; run that phase first");
    load_checkpoint(model, ck);
    require(model.completed_phase >= int(prev), ErrorKind::Phase, ck.string() + " does not hold a completed '" +
                                                                      to_string(prev) + "' phase");
  }
  const auto data = acquire_dataset(config, log);
  write_text(out / "config.json", run_config_json(config));

  json j;
  j["command"] = "train";
  j["out_dir"] = out.string();
  auto& arr = j["phases"] = json::array();
  for (auto p : phases) {
    auto r = run_phase(model, data, p, config.optim(p), log, to_string(p));
    write_phase(out, p, r, model);
    arr.push_back(summary_json(r));
  }
  return j.dump(2);
}

std::string run_eval(const RunConfig& config, const std::string& checkpoint, bool overwrite, const LogFn& log) {
  config.validate();
  const fs::path out = require_out(config);
  const fs::path table = out / "eval" / "table.csv", report = out / "eval" / "report.json";
  guard({table, report}, overwrite);

  Model32 model(config.model, config.seed);
  std::string used = checkpoint;
  if (used.empty())
    for (Phase p : {Phase::Classifier, Phase::Pose, Phase::Pretrain})
      if (fs::exists(checkpoint_path(out, p))) {
        used = checkpoint_path(out, p).string();
        break;
      }
  if (!used.empty()) load_checkpoint(model, used);
  say(log, used.empty() ? "evaluating freshly initialised weights" : "evaluating " + used);

  const auto data = acquire_dataset(config, log);
  const auto val = split_windows(data, synth::Split::Val, config.model.sampler());
  require(!val.empty(), ErrorKind::Data, "no validation windows to evaluate");
  auto pose = evaluate_pose(model, data, val);
  const auto cls = evaluate_classifier(model, data, val);
  pose.report.accuracy = cls.accuracy;

  write_text(out / "eval" / "config.json", run_config_json(config));
  write_text(table, eval_table_csv(pose.report, data.manifest.class_names));
  json j;
  j["command"] = "eval";
  j["checkpoint"] = used;
  j["completed_phase"] = model.completed_phase;
  j["windows"] = val.size();
  j["val_mpjpe_mm"] = pose.report.overall_mpjpe;
  j["accuracy"] = cls.accuracy;
  j["historical_only_accuracy"] = cls.historical_only_accuracy;
  j["chance_accuracy"] = 1.0 / double(config.model.num_classes);
  j["per_class"] = json::parse(eval_report_json(pose.report, data.manifest.class_names));
  write_text(report, j.dump(2) + "\n");
  return j.dump(2);
}

std::string run_ablate(const RunConfig& config, const std::string& axis, const std::vector<std::size_t>& given,
                       bool overwrite, const LogFn& log) {
  config.validate();
  const auto& a = config.ablation;
  require(axis == "gap" || axis == "context" || axis == "arch", ErrorKind::Usage,
          "unknown ablation axis '" + axis + "' (expected gap, context or arch)");
  const auto values = !given.empty()        ? given
                      : axis == "gap"       ? a.gap_values
                      : axis == "context"   ? a.context_values
                                            : a.arch_values;
  require(!values.empty(), ErrorKind::Usage, "ablation needs at least one value");
  const fs::path out = require_out(config) / ("ablate_" + axis);
  const fs::path sweep_path = out / "sweep.csv", curves_path = out / "curves.csv";
  guard({sweep_path, curves_path}, overwrite);

  auto cell_config = [&](std::size_t v) {
    ModelConfig m = config.model;
    if (axis == "gap") {
      m.gap_g = v;
    } else if (axis == "context") {
      m.context_n = v;
      m.gap_g = a.context_gap;
    } else {
      m.temporal_depth = v;
      m.context_n = a.arch_context;
      m.gap_g = a.arch_gap;
    }
    m.validate();
    return m;
  };
  std::size_t length = 0;
  for (auto v : values) length = std::max(length, cell_config(v).sampler().required_length());
  synth::DatasetConfig dc = config.dataset;
  dc.sequences_per_class = a.sequences_per_class;
  dc.length = length + a.extra_frames;
  say(log, "sweep dataset: " + std::to_string(dc.num_classes * dc.sequences_per_class) + " sequences of " +
               std::to_string(dc.length) + " frames");
  const auto data = synth::generate_dataset(dc);

  RunConfig echo = config;
  echo.dataset = dc;
  write_text(out / "config.json", run_config_json(echo));

  // One set of phase-0 weights serves every cell.
  Model32 shared(config.model, config.seed);
  if (!a.pretrained_checkpoint.empty()) {
    say(log, "shared encoder/decoder from " + a.pretrained_checkpoint);
    load_checkpoint(shared, a.pretrained_checkpoint);
    require(shared.completed_phase >= 0, ErrorKind::Phase,
            a.pretrained_checkpoint + " does not hold completed phase-0 weights");
  } else {
    OptimConfig o = a.pretrain;
    o.seed = config.seed;
    auto r = run_phase(shared, data, Phase::Pretrain, o, log, "pretrain");
    save_checkpoint(shared, out / "pretrain.ckpt");
    write_text(out / "pretrain_report.csv", report_csv(r));
  }

  std::ostringstream sweep, curves;
  sweep << axis << ",context_n,gap_g,k_value,temporal_depth,time_advantage_s,initial_val_mpjpe_mm,final_val_mpjpe_mm\n";
  curves << axis << ",global step,validation loss\n";
  json cells = json::array();
  for (auto v : values) {
    const ModelConfig mc = cell_config(v);
    Model32 cell(mc, config.seed);
    for (Stage s : {Stage::Encoder, Stage::Decoder})
      for (auto* p : cell.stage_parameters(s)) {
        const auto src = shared.parameter(p->name).value.data();
        std::copy(src.begin(), src.end(), p->value.data().begin());
      }
    cell.completed_phase = 0;
    OptimConfig o = a.pose;
    o.seed = config.seed;
    const std::string tag = axis + "=" + std::to_string(v);
    auto r = run_phase(cell, data, Phase::Pose, o, log, tag);
    const fs::path dir = out / "cells" / tag;
    write_text(dir / "pose_report.csv", report_csv(r));
    write_text(dir / "pose_curve.csv", curve_csv(r));
    const double init = r.summary.at("initial_val_mpjpe_mm"), fin = r.summary.at("final_val_mpjpe_mm");
    sweep << v << ',' << mc.context_n << ',' << mc.gap_g << ',' << mc.k_value << ',' << mc.temporal_depth << ','
          << time_advantage(mc.gap_g) << ',' << num(init) << ',' << num(fin) << '\n';
    for (const auto& p : r.curve) curves << v << ',' << p.step << ',' << num(p.val_loss) << '\n';
    cells.push_back({{axis, v},
                     {"context_n", mc.context_n},
                     {"gap_g", mc.gap_g},
                     {"temporal_depth", mc.temporal_depth},
                     {"initial_val_mpjpe_mm", init},
                     {"final_val_mpjpe_mm", fin},
                     {"seconds", r.seconds}});
  }
  write_text(sweep_path, sweep.str());
  write_text(curves_path, curves.str());
  json j;
  j["command"] = "ablate";
  j["axis"] = axis;
  j["sweep_csv"] = sweep_path.string();
  j["curves_csv"] = curves_path.string();
  j["cells"] = cells;
  return j.dump(2);
}

std::string run_classify_stream(const RunConfig& config, const std::string& checkpoint, bool overwrite,
                                const LogFn& log) {
  config.validate();
  const fs::path out = require_out(config) / "stream";
  const fs::path csv_path = out / "stream.csv", json_path = out / "stream.json";
  guard({csv_path, json_path}, overwrite);

  std::string used = checkpoint;
  if (used.empty() && fs::exists(checkpoint_path(config.out_dir, Phase::Classifier)))
    used = checkpoint_path(config.out_dir, Phase::Classifier).string();
  require(!used.empty(), ErrorKind::Phase, "streaming classification needs a classifier checkpoint");
  Model32 model(config.model, config.seed);
  load_checkpoint(model, used);
  require(model.completed_phase >= int(Phase::Classifier), ErrorKind::Phase,
          used + " holds no trained classifier (completed phase " + std::to_string(model.completed_phase) + ")");

  const auto data = acquire_dataset(config, log);
  const std::size_t si = config.stream.sequence;
  require(si < data.sequences.size(), ErrorKind::Usage,
          "stream.sequence " + std::to_string(si) + " is out of range (dataset has " +
              std::to_string(data.sequences.size()) + " sequences)");
  const auto& seq = data.sequences[si];
  std::vector<WindowRef> windows;
  for (auto& w : enumerate_windows(config.model.sampler(), seq.length, config.stream.hop, seq.id))
    windows.push_back({si, std::move(w)});
  require(!windows.empty(), ErrorKind::Window, "sequence " + seq.id + " is too short for one window");

  const auto t0 = Clock::now();
  const auto cls = evaluate_classifier(model, data, windows);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

  const std::size_t C = config.model.num_classes;
  const auto pred = argmax_rows(cls.logits, C);
  std::ostringstream csv;
  csv << "window,first_input,last_input,target,lead_frames,label,predicted";
  for (const auto& name : data.manifest.class_names) csv << ",logit_" << name;
  csv << '\n';
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i].window;
    csv << i << ',' << w.input_indices.front() << ',' << w.input_indices.back() << ',' << w.target_indices.front()
        << ',' << (w.target_indices.front() - w.input_indices.back()) << ',' << seq.class_id << ',' << pred[i];
    for (std::size_t c = 0; c < C; ++c) csv << ',' << num(cls.logits[i * C + c]);
    csv << '\n';
  }
  write_text(csv_path, csv.str());
  write_text(out / "config.json", run_config_json(config));
  json j;
  j["command"] = "classify-stream";
  j["checkpoint"] = used;
  j["sequence"] = seq.id;
  j["class"] = data.manifest.class_names.at(std::size_t(seq.class_id));
  j["windows"] = windows.size();
  j["hop"] = config.stream.hop;
  j["lead_seconds"] = double(config.model.gap_g) / kFramesPerSecond;
  j["accuracy"] = cls.accuracy;
  j["seconds"] = secs;
  j["windows_per_second"] = secs > 0 ? double(windows.size()) / secs : 0.0;
  write_text(json_path, j.dump(2) + "\n");
  say(log, "classified " + std::to_string(windows.size()) + " windows of " + seq.id);
  return j.dump(2);
}

}  // namespace cgap2
