#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "cgap2/error.hpp"
#include "cgap2/gradcheck.hpp"
#include "cgap2/model.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cgap2;

namespace {

std::filesystem::path scratch_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cgap2_model_" + name + "_" + std::to_string(::getpid()));
}

Tensor32 random_images(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor<float>(std::move(shape), rng, -1.0f, 1.0f);
}

}  // namespace

TEST_CASE("desk shape contracts") {
  Model32 m(ModelConfig::desk(), 1);
  NoGradGuard ng;
  auto enc = m.encode(random_images({10, 3, 64, 64}, 2));
  CHECK(enc.shape() == Shape{10, 64, 4, 4});
  auto pred = m.temporal(m.frames_to_clip(enc, 2), NormMode::Eval);
  CHECK(pred.shape() == Shape{2, 64, 1, 4, 4});
  auto hm = m.decode(m.clip_to_frames(pred));
  CHECK(hm.shape() == Shape{2, 17, 16, 16, 16});
  CHECK(m.heatmaps_to_pose(hm).shape() == Shape{2, 17, 3});

  auto windows = random_images({2, 5, 3, 64, 64}, 3);
  CHECK(m.predict_pose(windows).shape() == Shape{2, 1, 17, 3});
  CHECK(m.classify(windows).shape() == Shape{2, 6});
  CHECK(m.classify(windows, true).shape() == Shape{2, 6});

  CHECK_THROWS_AS(m.encode(random_images({1, 3, 32, 32}, 4)), Error);
  CHECK_THROWS_AS(m.temporal(Tensor32({2, 64, 4, 4, 4}), NormMode::Eval), Error);
  CHECK_THROWS_AS(m.classify_features(Tensor32({1, 64, 5, 4, 4}), Tensor32({1, 64, 2, 4, 4})), Error);
}

TEST_CASE("paper configuration layer shapes") {
  auto c = ModelConfig::paper();
  CHECK(c.encoder_stages() == 5);  // 256 -> 8
  CHECK(c.decoder_stages() == 3);  // 8 -> 64
  std::map<std::string, Shape> shapes;
  for (const auto& p : parameter_layout(c)) shapes[p.name] = p.shape;
  CHECK(shapes.at("encoder.stage4.conv.weight") == Shape{2048, 2048, 3, 3});
  CHECK(shapes.at("temporal.bottleneck.weight") == Shape{512, 2048, 1, 1, 1});
  CHECK(shapes.at("temporal.reduce.weight") == Shape{2048, 2048, 5, 1, 1});
  CHECK(shapes.at("decoder.head.weight") == Shape{17 * 64, 256, 1, 1});
  CHECK(shapes.at("classifier.fc0.weight")[0] == 4096);
  CHECK(shapes.at("classifier.fc1.weight") == Shape{2048, 4096});
}

TEST_CASE("zero features decode to the volume centre") {
  Model64 m(ModelConfig::desk(), 5);
  NoGradGuard ng;
  // The head is zero-initialized, so every heatmap is flat.
  auto pose = m.heatmaps_to_pose(m.decode(Tensor64({2, 64, 4, 4})));
  for (std::size_t j = 0; j < 2 * 17; ++j) {
    CHECK(std::abs(pose[j * 3 + 0] - 0.0) < 1e-9);
    CHECK(std::abs(pose[j * 3 + 1] - 0.0) < 1e-9);
    CHECK(std::abs(pose[j * 3 + 2] - 4500.0) < 1e-9);
  }
}

TEST_CASE("forward passes are deterministic and frames are independent") {
  Model32 m(ModelConfig::desk(), 6);
  NoGradGuard ng;
  auto windows = random_images({2, 5, 3, 64, 64}, 7);
  auto a = m.predict_pose(windows), b = m.predict_pose(windows);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  Model32 twin(ModelConfig::desk(), 6);
  auto c = twin.predict_pose(windows);
  CHECK(std::equal(a.data().begin(), a.data().end(), c.data().begin()));

  auto frames = random_images({6, 3, 64, 64}, 8);
  auto enc = m.encode(frames);
  const std::vector<std::size_t> perm = {4, 2, 0, 5, 1, 3};
  Tensor32 shuffled(frames.shape());
  const std::size_t per = 3 * 64 * 64;
  for (std::size_t i = 0; i < 6; ++i)
    std::copy_n(frames.data().begin() + perm[i] * per, per, shuffled.data().begin() + i * per);
  auto enc_shuffled = m.encode(shuffled);
  const std::size_t fper = 64 * 4 * 4;
  for (std::size_t i = 0; i < 6; ++i)
    REQUIRE(std::equal(enc_shuffled.data().begin() + i * fper, enc_shuffled.data().begin() + (i + 1) * fper,
                       enc.data().begin() + perm[i] * fper));
}

TEST_CASE("zeroing the temporal stage changes predictions but not encoder outputs") {
  Model32 m(ModelConfig::desk(), 9);
  NoGradGuard ng;
  auto windows = random_images({1, 5, 3, 64, 64}, 10);
  auto frames = reshape(windows, {5, 3, 64, 64});
  auto enc_before = m.encode(frames);
  auto pred_before = m.temporal(m.frames_to_clip(enc_before, 1), NormMode::Eval);
  for (auto* p : m.stage_parameters(Stage::Temporal))
    for (std::size_t i = 0; i < p->numel(); ++i) p->value[i] = 0.0f;
  auto enc_after = m.encode(frames);
  auto pred_after = m.temporal(m.frames_to_clip(enc_after, 1), NormMode::Eval);
  CHECK(std::equal(enc_before.data().begin(), enc_before.data().end(), enc_after.data().begin()));
  CHECK_FALSE(std::equal(pred_before.data().begin(), pred_before.data().end(), pred_after.data().begin()));
}

TEST_CASE("parameter counts match the closed form") {
  CHECK(oracle::conv_params(512, 512, 27) == 7078400);  // 7,077,888 weights + 512 biases
  CHECK(oracle::conv_params(512, 2048, 1) == 1049088);
  std::vector<ModelConfig> configs = {ModelConfig::desk(), ModelConfig::paper(), ModelConfig::tiny()};
  for (std::size_t floor : {0, 8, 16, 64, 128}) {
    auto c = ModelConfig::desk();
    c.decoder_min_channels = floor;
    configs.push_back(c);
  }
  for (std::size_t d = 1; d <= 5; ++d) {
    auto c = ModelConfig::desk();
    c.temporal_depth = d;
    configs.push_back(c);
    c.context_n = 10;
    c.k_value = 2;
    configs.push_back(c);
  }
  for (const auto& c : configs) {
    const auto k = oracle::closed_form(c);
    CHECK(count_parameters(c, Stage::Encoder) == k.encoder);
    CHECK(count_parameters(c, Stage::Temporal) == k.temporal);
    CHECK(count_parameters(c, Stage::Decoder) == k.decoder);
    CHECK(count_parameters(c, Stage::Classifier) == k.classifier);
    CHECK(count_parameters(c) == k.all());
  }
  const auto paper = ModelConfig::paper();
  const auto temporal = count_parameters(paper, Stage::Temporal);
  MESSAGE("paper-config temporal module: " << temporal << " parameters");
  CHECK(temporal >= 10'000'000);
  CHECK(temporal <= 100'000'000);

  Model32 m(ModelConfig::desk(), 1);
  const auto before = m.count_parameters();
  m.set_stage_frozen(Stage::Encoder, true);
  CHECK(m.stage_frozen(Stage::Encoder));
  CHECK_FALSE(m.stage_frozen(Stage::Temporal));
  CHECK(m.count_parameters() == before);
  CHECK(before == count_parameters(ModelConfig::desk()));
}

TEST_CASE("invalid configs are rejected at construction") {
  auto c = ModelConfig::desk();
  c.k_value = 6;
  CHECK_THROWS_AS(Model32(c, 1), Error);
  c = ModelConfig::desk();
  c.feature_spatial = 3;
  CHECK_THROWS_AS(Model32(c, 1), Error);
  c = ModelConfig::desk();
  c.num_joints = 16;
  CHECK_THROWS_AS(Model32(c, 1), Error);
  c = ModelConfig::desk();
  c.feature_spatial = 1;
  c.image_size = 64;
  c.heatmap_size = 16;
  CHECK_THROWS_AS(Model32(c, 1), Error);  // pooling block needs an even spatial size
}

TEST_CASE("checkpoint round trip and rejection") {
  Model32 a(ModelConfig::desk(), 11);
  a.completed_phase = 1;
  a.batchnorm_state().running_mean[3] = 0.25f;
  auto path = scratch_file("ckpt");
  save_checkpoint(a, path);

  Model32 b(ModelConfig::desk(), 12);
  load_checkpoint(b, path);
  CHECK(b.completed_phase == 1);
  CHECK(b.batchnorm_state().running_mean[3] == 0.25f);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& x = a.parameters()[i].value;
    const auto& y = b.parameters()[i].value;
    REQUIRE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  }

  auto other = ModelConfig::desk();
  other.bottleneck_channels = 8;
  Model32 wrong(other, 1);
  const float probe = wrong.parameters()[0].value[0];
  CHECK_THROWS_AS(load_checkpoint(wrong, path), Error);
  CHECK(wrong.parameters()[0].value[0] == probe);  // untouched on rejection

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v[4] = {2, 0, 0, 0};
    f.write(v, 4);
  }
  try {
    load_checkpoint(b, path);
    FAIL("expected a version error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Checkpoint);
    CHECK(std::string(e.what()).find("version 2") != std::string::npos);
  }

  save_checkpoint(a, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 10);
  CHECK_THROWS_AS(load_checkpoint(b, path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("end-to-end gradient check on the tiny config") {
  const auto cfg = ModelConfig::tiny();
  Model64 m(cfg, 13);
  std::mt19937_64 rng(14);
  // Give the zero-initialized head random weights so gradients reach the decoder.
  auto& head = m.parameter("decoder.head.weight").value;
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (std::size_t i = 0; i < head.numel(); ++i) head[i] = u(rng);

  auto windows = oracle::random_tensor<double>({2, cfg.context_n, 3, cfg.image_size, cfg.image_size}, rng, -1.0, 1.0);
  auto target = oracle::random_tensor<double>({2, 17, 3}, rng, -900.0, 900.0);
  for (std::size_t i = 2; i < target.numel(); i += 3) target[i] += 4500.0;
  const std::vector<int> labels = {2, 0};

  std::vector<Tensor64> inputs;
  for (auto& p : m.parameters()) inputs.push_back(p.value);
  auto f = [&](const std::vector<Tensor64>&) {
    const std::size_t N = 2, n = cfg.context_n, S = cfg.image_size;
    auto clip = m.frames_to_clip(m.encode(reshape(windows, {N * n, 3, S, S})), N);
    auto pred = m.temporal(clip, NormMode::Train);
    auto pose = m.heatmaps_to_pose(m.decode(m.clip_to_frames(pred)));
    auto pose_loss = l1_pose_loss(pose, target);
    auto ce = softmax_cross_entropy(m.classify_features(clip, pred), labels);
    return add(mul(pose_loss, Tensor64::scalar(1e-3)), ce);
  };
  auto r = grad_check(f, inputs, {.eps = 1e-6, .tol = 1e-5});
  INFO("max rel err " << r.max_rel_error << " at input " << r.worst_input << "[" << r.worst_index << "] analytic "
                      << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.coordinates == m.count_parameters());
  CHECK(r.max_rel_error <= 1e-5);
}
