// test_nn.cpp — encoder/projector/probe contracts and the checkpoint
// container.

#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "splicer/checkpoint.hpp"
#include "splicer/gradcheck.hpp"
#include "splicer/nn.hpp"
#include "splicer/rng.hpp"
#include "test_util.hpp"

using namespace splicer;
using namespace splicer::nn;

namespace {
EncoderConfig tiny_encoder_config() {
  EncoderConfig cfg;
  cfg.input_channels = 2;
  cfg.input_h = 16;
  cfg.input_w = 16;
  cfg.stages = {{8, 3, 2}, {12, 3, 2}};
  cfg.representation_dim = 10;
  return cfg;
}
}  // namespace

TEST_CASE("encoder: zero input through a zeroed head gives zero representations") {
  Rng rng(70);
  Encoder<double> enc(tiny_encoder_config(), rng);
  for (auto& p : enc.parameters()) {
    if (p.name == "head.w" || p.name == "head.b") {
      auto& vals = p.tensor.leaf_values();
      std::fill(vals.begin(), vals.end(), 0.0);
    }
  }
  auto x = Tensor<double>::zeros({3, 2, 16, 16});
  auto z = enc.forward(x, /*train=*/false);
  CHECK(z.shape() == Shape{3, 10});
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("encoder: output shape follows the batch, mismatches are rejected") {
  Rng rng(71);
  Encoder<float> enc(tiny_encoder_config(), rng);
  for (int b : {1, 2, 7}) {
    auto x = testutil::random_tensor<float>({b, 2, 16, 16}, rng);
    CHECK(enc.forward(x, true).shape() == Shape{b, 10});
  }
  auto wrong_c = Tensor<float>::zeros({2, 3, 16, 16});
  CHECK_THROWS_AS(enc.forward(wrong_c, true), ConfigError);
  auto wrong_hw = Tensor<float>::zeros({2, 2, 8, 16});
  CHECK_THROWS_AS(enc.forward(wrong_hw, true), ConfigError);
}

TEST_CASE("encoder: eval forward is pure and deterministic") {
  Rng rng(72);
  Encoder<float> enc(tiny_encoder_config(), rng);
  auto x = testutil::random_tensor<float>({4, 2, 16, 16}, rng);
  auto a = enc.forward(x, false).values();
  auto b = enc.forward(x, false).values();
  CHECK(testutil::bitwise_equal_f(a, b));
}

TEST_CASE("encoder: first-conv gradient matches finite differences") {
  Rng rng(73);
  Encoder<double> enc(tiny_encoder_config(), rng);
  auto x = testutil::random_tensor<double>({3, 2, 16, 16}, rng);
  Tensor<double> conv0;
  for (auto& p : enc.parameters()) {
    if (p.name == "stage0.conv.w") conv0 = p.tensor;
  }
  REQUIRE(conv0.defined());
  const double err = finite_diff_check_param<double>(
      [&]() { return sum_all(enc.forward(x, true)); }, conv0, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("encoder/projector: built parameter count equals the closed form") {
  Rng rng(74);
  auto ecfg = tiny_encoder_config();
  Encoder<float> enc(ecfg, rng);
  std::int64_t built = 0;
  for (auto& p : enc.parameters()) built += p.tensor.size();
  CHECK(built == ecfg.parameter_count());

  ProjectorConfig pcfg;
  pcfg.layers = 3;
  pcfg.hidden_dim = 24;
  pcfg.output_dim = 17;
  Projector<float> proj(pcfg, 10, rng);
  built = 0;
  for (auto& p : proj.parameters()) built += p.tensor.size();
  CHECK(built == pcfg.parameter_count(10));
}

TEST_CASE("projector: paper-scale shapes from config without allocation") {
  ProjectorConfig pcfg;
  pcfg.layers = 3;
  pcfg.hidden_dim = 8192;
  pcfg.output_dim = 8192;
  auto dims = pcfg.layer_dims(512);
  REQUIRE(dims.size() == 3);
  CHECK(dims[0] == std::pair<std::int64_t, std::int64_t>{512, 8192});
  CHECK(dims[1] == std::pair<std::int64_t, std::int64_t>{8192, 8192});
  CHECK(dims[2] == std::pair<std::int64_t, std::int64_t>{8192, 8192});

  // per-component head: same stack ending at width 431
  pcfg.output_dim = 431;
  auto comp = pcfg.layer_dims(512);
  CHECK(comp[2].second == 431);
}

TEST_CASE("projector: identity-initialized single layer passes input through") {
  Rng rng(75);
  ProjectorConfig pcfg;
  pcfg.layers = 1;
  pcfg.hidden_dim = 6;
  pcfg.output_dim = 6;
  Projector<double> proj(pcfg, 6, rng);
  proj.init_identity();
  auto z = testutil::random_tensor<double>({4, 6}, rng);
  CHECK(proj.forward(z, false).values() == z.values());

  ProjectorConfig rect = pcfg;
  rect.output_dim = 5;
  Projector<double> bad(rect, 6, rng);
  CHECK_THROWS_AS(bad.init_identity(), ConfigError);
}

TEST_CASE("probe: zero init yields uniform probabilities; rows sum to one") {
  Rng rng(76);
  LinearProbe<double> probe({7, 4});
  auto z = testutil::random_tensor<double>({5, 7}, rng);
  auto p = probe.forward(z);
  for (double v : p.values()) CHECK(v == doctest::Approx(0.25));
  // random weights: rows still sum to 1
  for (auto& param : probe.parameters()) {
    for (auto& v : param.tensor.leaf_values()) v = rng.gaussian();
  }
  p = probe.forward(z);
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    for (int c = 0; c < 4; ++c) s += p.values()[r * 4 + c];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("probe: separable toy set reaches perfect accuracy in 200 steps") {
  Rng rng(77);
  // two linearly separable clusters at +/-2 on the first coordinate
  const int n = 32, dim = 5;
  std::vector<double> zvals(n * dim);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = i % 2;
    for (int j = 0; j < dim; ++j) {
      zvals[i * dim + j] = rng.gaussian() * 0.3;
    }
    zvals[i * dim] += labels[i] == 0 ? -2.0 : 2.0;
  }
  auto z = Tensor<double>::from({n, dim}, zvals);
  LinearProbe<double> probe({dim, 2});
  auto params = probe.parameters();
  for (int step = 0; step < 200; ++step) {
    for (auto& p : params) p.tensor.zero_grad();
    auto loss = probe.loss(z, labels);
    backward(loss);
    for (auto& p : params) {
      auto& vals = p.tensor.leaf_values();
      const auto& grad = p.tensor.grad();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        vals[i] -= 0.5 * grad[i];
      }
    }
  }
  auto preds = probe.predict(z);
  int correct = 0;
  for (int i = 0; i < n; ++i) correct += preds[i] == labels[i];
  CHECK(correct == n);
}

TEST_CASE("checkpoint: save -> load -> save round-trips byte-identically") {
  Rng rng(78);
  const std::string path1 = "/tmp/splicer_test_ckpt1.splc";
  const std::string path2 = "/tmp/splicer_test_ckpt2.splc";
  std::vector<ckpt::Blob<float>> blobs;
  blobs.push_back({"enc.w", {3, 4}, std::vector<float>(12)});
  blobs.push_back({"enc.b", {4}, std::vector<float>(4)});
  for (auto& b : blobs) {
    for (auto& v : b.values) v = static_cast<float>(rng.gaussian());
  }
  ckpt::save<float>(path1, "{\"kind\":\"test\"}", blobs);
  auto loaded = ckpt::load<float>(path1);
  CHECK(loaded.config_json == "{\"kind\":\"test\"}");
  REQUIRE(loaded.blobs.count("enc.w") == 1);
  CHECK(loaded.blobs["enc.w"].shape == Shape{3, 4});
  CHECK(testutil::bitwise_equal_f(loaded.blobs["enc.w"].values,
                                  blobs[0].values));
  std::vector<ckpt::Blob<float>> reblobs;
  for (const auto& name : {"enc.w", "enc.b"}) {
    reblobs.push_back(loaded.blobs[name]);
  }
  ckpt::save<float>(path2, loaded.config_json, reblobs);
  const auto bytes1 = [&] {
    std::ifstream f(path1, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  }();
  const auto bytes2 = [&] {
    std::ifstream f(path2, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  }();
  CHECK(bytes1 == bytes2);
  std::remove(path1.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("checkpoint: bad magic and dtype mismatch are rejected") {
  const std::string path = "/tmp/splicer_test_ckpt_bad.splc";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE0000";
  }
  CHECK_THROWS_AS(ckpt::load<float>(path), IoError);
  std::vector<ckpt::Blob<float>> blobs = {{"x", {2}, {1.0f, 2.0f}}};
  ckpt::save<float>(path, "{}", blobs);
  CHECK_THROWS_AS(ckpt::load<double>(path), IoError);
  std::remove(path.c_str());
}
