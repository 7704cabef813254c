#pragma once

// Run configuration and the commands built on it: dataset generation,
// phase-wise training, evaluation, ablation sweeps and streaming
// classification. Every command writes plain CSV/JSON files into the run's
// output directory together with the resolved configuration.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cgap2/model.hpp"
#include "cgap2/synthdata.hpp"
#include "cgap2/training.hpp"

namespace cgap2 {

inline constexpr double kFramesPerSecond = 15.0;

struct AblationConfig {
  std::vector<std::size_t> gap_values{2, 15, 25, 35};
  std::vector<std::size_t> context_values{5, 10, 15, 20};
  std::size_t context_gap = 25;
  std::vector<std::size_t> arch_values{1, 2, 3, 4, 5};
  std::size_t arch_context = 15;
  std::size_t arch_gap = 15;
  // Sweeps regenerate the dataset long enough for the largest cell plus this
  // many frames, with their own (smaller) number of sequences.
  std::size_t sequences_per_class = 8;
  std::size_t extra_frames = 10;
  OptimConfig pretrain;
  OptimConfig pose;
  // Shared phase-0 weights; empty trains them once per sweep.
  std::string pretrained_checkpoint;
};

struct StreamConfig {
  std::size_t sequence = 0;  // index into the dataset's sequence list
  std::size_t hop = 1;
};

struct RunConfig {
  std::uint64_t seed = 7;  // model initialisation and sample order
  std::string out_dir;
  std::string dataset_dir;  // empty: generate `dataset` in memory
  synth::DatasetConfig dataset;
  ModelConfig model = ModelConfig::desk();
  OptimConfig pretrain;
  OptimConfig pose = OptimConfig::pose_phase();
  OptimConfig classifier = OptimConfig::classifier_phase();
  AblationConfig ablation;
  StreamConfig stream;

  static RunConfig desk();
  /// Optimizer settings of a phase with the run seed folded in.
  OptimConfig optim(Phase phase) const;
  void validate() const;
};

std::string run_config_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are a config error.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Sets one field by dotted path ("pose.learning_rate", "model.gap_g").
/// The value is read as JSON, falling back to a plain string.
void set_run_field(RunConfig& config, const std::string& dotted_path, const std::string& value);

using LogFn = std::function<void(const std::string&)>;

/// Each command returns a JSON summary of what it did and wrote.
std::string run_generate(const RunConfig& config, bool overwrite, const LogFn& log = {});

/// phase: pretrain | pose | classifier | all. A single later phase resumes
/// from the checkpoint the previous phase left in out_dir.
std::string run_train(const RunConfig& config, const std::string& phase, bool overwrite, const LogFn& log = {});

/// Empty checkpoint: the most advanced checkpoint in out_dir, or fresh
/// weights when there is none.
std::string run_eval(const RunConfig& config, const std::string& checkpoint, bool overwrite, const LogFn& log = {});

/// axis: gap | context | arch. Empty values use the configured defaults.
std::string run_ablate(const RunConfig& config, const std::string& axis, const std::vector<std::size_t>& values,
                       bool overwrite, const LogFn& log = {});

std::string run_classify_stream(const RunConfig& config, const std::string& checkpoint, bool overwrite,
                                const LogFn& log = {});

/// "2,15,25" -> {2,15,25}; anything else is a usage error.
std::vector<std::size_t> parse_value_list(const std::string& csv);

/// g / 15 seconds, three decimals.
std::string time_advantage(std::size_t gap);

}  // namespace cgap2
