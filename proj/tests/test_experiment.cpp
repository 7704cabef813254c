#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgap2/error.hpp"
#include "cgap2/experiment.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cgap2;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Usage;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small enough to run every phase in a few seconds.
RunConfig micro(const fs::path& out) {
  RunConfig c = RunConfig::desk();
  c.out_dir = out.string();
  c.dataset.sequences_per_class = 3;
  for (OptimConfig* o : {&c.pretrain, &c.pose, &c.classifier}) {
    o->epochs = 2;
    o->lr_drop_epoch = 1;
    o->samples_per_epoch = 32;
  }
  return c;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cgap2_test_experiment_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("time advantage at 15 frames per second") {
  CHECK(time_advantage(15) == "1.000");
  CHECK(time_advantage(2) == "0.133");
  CHECK(time_advantage(25) == "1.667");
  CHECK(time_advantage(35) == "2.333");
}

TEST_CASE("value lists") {
  CHECK(parse_value_list("2,15,25,35") == std::vector<std::size_t>{2, 15, 25, 35});
  CHECK(parse_value_list("7") == std::vector<std::size_t>{7});
  for (const char* bad : {"", "2,,3", "a", "2,", "-1", "0", "3x"})
    CHECK(kind_of([&] { parse_value_list(bad); }) == ErrorKind::Usage);
}

TEST_CASE("run config round trip") {
  RunConfig c = RunConfig::desk();
  c.seed = 11;
  c.model.gap_g = 2;
  c.pose.learning_rate = 0.05;
  c.ablation.gap_values = {2, 35};
  c.stream.hop = 3;
  const auto text = run_config_json(c);
  const auto back = parse_run_config(text);
  CHECK(run_config_json(back) == text);
  CHECK(back.seed == 11);
  CHECK(back.model.gap_g == 2);
  CHECK(back.pose.learning_rate == 0.05);
  CHECK(back.optim(Phase::Pose).seed == 11);
}

TEST_CASE("partial configs keep defaults and unknown keys are rejected") {
  const auto c = parse_run_config(R"({"model": {"gap_g": 25}})");
  CHECK(c.model.gap_g == 25);
  CHECK(c.model.context_n == 5);
  CHECK(c.pose.batch_size == 32);
  CHECK(c.classifier.batch_size == 64);
  CHECK(c.pose.lr_drop_epoch == 5);
  CHECK(kind_of([] { parse_run_config(R"({"modle": {}})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_run_config(R"({"model": {"gapg": 1}})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_run_config(R"({"model": {"gap_g": "wide"}})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_run_config("{not json"); }) == ErrorKind::Config);
}

TEST_CASE("field overrides") {
  RunConfig c = RunConfig::desk();
  set_run_field(c, "pose.learning_rate", "0.02");
  set_run_field(c, "out_dir", "runs/a b");
  set_run_field(c, "ablation.gap_values", "[2,15]");
  CHECK(c.pose.learning_rate == 0.02);
  CHECK(c.out_dir == "runs/a b");
  CHECK(c.ablation.gap_values == std::vector<std::size_t>{2, 15});
  CHECK(kind_of([&] { set_run_field(c, "pose.nothing", "1"); }) == ErrorKind::Usage);
  CHECK(kind_of([&] { set_run_field(c, "pose.epochs", "many"); }) == ErrorKind::Usage);
}

TEST_CASE("mismatched dataset and model are a config error") {
  RunConfig c = micro(scratch("mismatch"));
  c.dataset.num_classes = 4;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::Config);
}

TEST_CASE("phase order is enforced across invocations") {
  const auto out = scratch("phases");
  const RunConfig c = micro(out);
  CHECK(kind_of([&] { run_train(c, "pose", false); }) == ErrorKind::Phase);
  CHECK(kind_of([&] { run_train(c, "classifier", false); }) == ErrorKind::Phase);
  CHECK(kind_of([&] { run_classify_stream(c, "", false); }) == ErrorKind::Phase);
  CHECK(kind_of([&] { run_train(c, "sideways", false); }) == ErrorKind::Usage);
  run_train(c, "pretrain", false);
  CHECK(kind_of([&] { run_train(c, "classifier", false); }) == ErrorKind::Phase);
  CHECK(kind_of([&] { run_train(c, "pretrain", false); }) == ErrorKind::Usage);
  run_train(c, "pose", false);
  run_train(c, "classifier", false);
  for (const char* f : {"config.json", "pretrain.ckpt", "pose_report.csv", "classifier_curve.csv"})
    CHECK(fs::exists(out / f));
  // One CSV row per epoch plus the header.
  const auto csv = slurp(out / "pose_report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  fs::remove_all(out);
}

TEST_CASE("separate phase invocations match a single run") {
  const auto a = scratch("split"), b = scratch("whole");
  run_train(micro(a), "pretrain", false);
  run_train(micro(a), "pose", false);
  run_train(micro(a), "classifier", false);
  run_train(micro(b), "all", false);
  for (const char* f : {"pretrain_report.csv", "pose_report.csv", "classifier_report.csv", "classifier_curve.csv"})
    CHECK(slurp(a / f) == slurp(b / f));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("eval and streaming outputs") {
  const auto out = scratch("eval");
  RunConfig c = micro(out);
  // Untrained weights are accepted by eval.
  const auto fresh = nlohmann::json::parse(run_eval(c, "", false));
  CHECK(fresh["completed_phase"] == -1);
  run_train(c, "all", false);
  CHECK(kind_of([&] { run_eval(c, "", false); }) == ErrorKind::Usage);
  const auto first = nlohmann::json::parse(run_eval(c, "", true));
  CHECK(first["completed_phase"] == 2);
  const auto table = slurp(out / "eval" / "table.csv");
  run_eval(c, "", true);
  CHECK(slurp(out / "eval" / "table.csv") == table);
  CHECK(table.rfind("Method,Directions,Discussion,Eating,Greeting,Phoning,Photo,Avg\n", 0) == 0);

  c.stream.sequence = 1;
  c.stream.hop = 2;
  const auto s = nlohmann::json::parse(run_classify_stream(c, "", false));
  const std::size_t expected = enumerate_windows(c.model.sampler(), c.dataset.length, 2).size();
  CHECK(s["windows"] == expected);
  std::istringstream csv(slurp(out / "stream" / "stream.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::vector<long> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(std::stol(cell));
    CHECK(f[3] - f[2] == long(c.model.gap_g));
    CHECK(f[4] == long(c.model.gap_g));
    CHECK(f[1] == long(2 * rows));
    ++rows;
  }
  CHECK(rows == expected);
  c.stream.sequence = 999;
  CHECK(kind_of([&] { run_classify_stream(c, "", true); }) == ErrorKind::Usage);
  fs::remove_all(out);
}

TEST_CASE("ablation sweep files") {
  const auto out = scratch("ablate");
  RunConfig c = micro(out);
  c.ablation.sequences_per_class = 3;
  c.ablation.pretrain = c.pretrain;
  c.ablation.pose = c.pose;
  CHECK(kind_of([&] { run_ablate(c, "width", {}, false); }) == ErrorKind::Usage);
  run_ablate(c, "gap", {2, 15}, false);
  const auto sweep = slurp(out / "ablate_gap" / "sweep.csv");
  std::istringstream in(sweep);
  std::string header, row2, row15;
  std::getline(in, header);
  std::getline(in, row2);
  std::getline(in, row15);
  CHECK(header ==
        "gap,context_n,gap_g,k_value,temporal_depth,time_advantage_s,initial_val_mpjpe_mm,final_val_mpjpe_mm");
  CHECK(row2.rfind("2,5,2,1,4,0.133,", 0) == 0);
  CHECK(row15.rfind("15,5,15,1,4,1.000,", 0) == 0);
  const auto curves = slurp(out / "ablate_gap" / "curves.csv");
  CHECK(curves.rfind("gap,global step,validation loss\n2,0,", 0) == 0);

  // The shared phase-0 weights can be reused from disk.
  c.ablation.pretrained_checkpoint = (out / "ablate_gap" / "pretrain.ckpt").string();
  run_ablate(c, "gap", {2, 15}, true);
  CHECK(slurp(out / "ablate_gap" / "sweep.csv") == sweep);
  fs::remove_all(out);
}
