// cgap2 command-line tool. Talks to the library exclusively through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cgap2/cgap2.h"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string seed;
  std::vector<std::string> sets;
  bool overwrite = false;
  bool quiet = false;
  std::string phase = "all";
  std::string checkpoint;
  std::string axis;
  std::string values;
  std::string hop;
  std::string sequence;
};

void print_line(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

int report(cgap2_status s) {
  if (s != CGAP2_OK) std::fprintf(stderr, "error (%s): %s\n", cgap2_last_error_kind(), cgap2_last_error());
  return int(s);
}

// Owns the run handle for the duration of one command.
class Run {
 public:
  ~Run() { cgap2_run_free(run_); }

  cgap2_status open(const Options& o) {
    auto s = o.config.empty() ? cgap2_run_create(nullptr, &run_) : cgap2_run_load(o.config.c_str(), &run_);
    if (s != CGAP2_OK) return s;
    for (const auto& kv : o.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "error (usage): --set expects FIELD=VALUE, got '%s'\n", kv.c_str());
        return CGAP2_ERR_USAGE;
      }
      if ((s = set(kv.substr(0, eq), kv.substr(eq + 1))) != CGAP2_OK) return s;
    }
    if (!o.seed.empty() && (s = set("seed", o.seed)) != CGAP2_OK) return s;
    if (!o.out.empty() && (s = set("out_dir", "\"" + o.out + "\"")) != CGAP2_OK) return s;
    if (!o.hop.empty() && (s = set("stream.hop", o.hop)) != CGAP2_OK) return s;
    if (!o.sequence.empty() && (s = set("stream.sequence", o.sequence)) != CGAP2_OK) return s;
    if (!o.quiet) cgap2_run_set_log(run_, print_line, nullptr);
    return CGAP2_OK;
  }

  cgap2_run* get() { return run_; }

  int finish(cgap2_status s) {
    if (s == CGAP2_OK && cgap2_run_result(run_)) std::printf("%s\n", cgap2_run_result(run_));
    return report(s);
  }

 private:
  cgap2_status set(const std::string& k, const std::string& v) { return cgap2_run_set(run_, k.c_str(), v.c_str()); }
  cgap2_run* run_ = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cgap2: anticipatory gesture recognition via future pose prediction"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--seed", o.seed, "seed for initialisation and sample order");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--set", o.sets, "override one config field, FIELD=VALUE (repeatable)");
  app.add_flag("--overwrite", o.overwrite, "replace existing outputs");
  app.add_flag("-q,--quiet", o.quiet, "no progress lines on stderr");

  auto* gen = app.add_subcommand("generate", "write the synthetic dataset");
  auto* train = app.add_subcommand("train", "run training phases");
  train->add_option("--phase", o.phase, "pretrain | pose | classifier | all")->capture_default_str();
  auto* eval = app.add_subcommand("eval", "pose error and accuracy on the validation split");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file (default: latest in --out)");
  auto* ablate = app.add_subcommand("ablate", "sweep gap, context or temporal depth");
  ablate->add_option("--axis", o.axis, "gap | context | arch")->required();
  ablate->add_option("--values", o.values, "comma-separated values (default: the standard sweep)");
  auto* stream = app.add_subcommand("classify-stream", "slide the window along one sequence");
  stream->add_option("--checkpoint", o.checkpoint, "classifier checkpoint (default: --out/classifier.ckpt)");
  stream->add_option("--hop", o.hop, "window hop in frames");
  stream->add_option("--sequence", o.sequence, "sequence index in the dataset");
  auto* show = app.add_subcommand("config", "print the resolved configuration");
  auto* params = app.add_subcommand("params", "parameter counts per stage of the configured model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e);
      return 0;
    }
    std::fprintf(stderr, "error (usage): %s\n", e.what());
    return CGAP2_ERR_USAGE;
  }

  Run run;
  if (auto s = run.open(o); s != CGAP2_OK) return report(s);
  const int ow = o.overwrite ? 1 : 0;

  if (*gen) return run.finish(cgap2_generate(run.get(), ow));
  if (*train) return run.finish(cgap2_train(run.get(), o.phase.c_str(), ow));
  if (*eval) return run.finish(cgap2_eval(run.get(), o.checkpoint.c_str(), ow));
  if (*ablate) return run.finish(cgap2_ablate(run.get(), o.axis.c_str(), o.values.c_str(), ow));
  if (*stream) return run.finish(cgap2_classify_stream(run.get(), o.checkpoint.c_str(), ow));
  if (*show) {
    char* text = nullptr;
    const auto s = cgap2_run_config_json(run.get(), &text);
    if (s == CGAP2_OK) std::fputs(text, stdout);
    cgap2_string_free(text);
    return report(s);
  }
  if (*params) {
    cgap2_model* model = nullptr;
    auto s = cgap2_run_create_model(run.get(), &model);
    if (s != CGAP2_OK) return report(s);
    for (const char* stage : {"encoder", "temporal", "decoder", "classifier", "all"}) {
      uint64_t n = 0;
      if ((s = cgap2_model_count_parameters(model, stage, &n)) != CGAP2_OK) break;
      std::printf("%-10s %llu\n", stage, static_cast<unsigned long long>(n));
    }
    cgap2_model_free(model);
    return report(s);
  }
  return CGAP2_ERR_USAGE;
}
