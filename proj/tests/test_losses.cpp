// test_losses.cpp — loss oracles: closed-form cases, independent brute-force
// reimplementations, symmetry/positivity properties, chunk isolation, and
// finite-difference checks on every composite objective.

#include <cmath>
#include <vector>

#include "doctest.h"
#include "splicer/gradcheck.hpp"
#include "splicer/losses.hpp"
#include "splicer/rng.hpp"
#include "test_util.hpp"

using namespace splicer;
using namespace splicer::losses;

namespace {

// independent straightforward reimplementation of the vicreg objective
double vicreg_oracle(const std::vector<double>& e1,
                     const std::vector<double>& e2, int B, int D,
                     const VicRegParams<double>& p) {
  double inv = 0;
  for (int i = 0; i < B * D; ++i) {
    const double d = e1[i] - e2[i];
    inv += d * d;
  }
  inv /= B * D;
  auto side = [&](const std::vector<double>& e) {
    std::vector<double> mean(D, 0.0);
    for (int b = 0; b < B; ++b)
      for (int j = 0; j < D; ++j) mean[j] += e[b * D + j];
    for (int j = 0; j < D; ++j) mean[j] /= B;
    double hinge = 0;
    for (int j = 0; j < D; ++j) {
      double var = 0;
      for (int b = 0; b < B; ++b) {
        const double d = e[b * D + j] - mean[j];
        var += d * d;
      }
      var /= (B - 1);
      const double sd = std::sqrt(var + p.eps);
      hinge += std::max(0.0, p.gamma_target - sd);
    }
    hinge /= D;
    double pen = 0;
    for (int j = 0; j < D; ++j) {
      for (int k = 0; k < D; ++k) {
        if (j == k) continue;
        double cjk = 0;
        for (int b = 0; b < B; ++b) {
          cjk += (e[b * D + j] - mean[j]) * (e[b * D + k] - mean[k]);
        }
        cjk /= (B - 1);
        pen += cjk * cjk;
      }
    }
    pen /= D;
    return std::make_pair(hinge, pen);
  };
  auto [h1, p1] = side(e1);
  auto [h2, p2] = side(e2);
  return p.lambda * inv + p.mu * (h1 + h2) + p.nu * (p1 + p2);
}

// independent pairwise-similarity reimplementation of the nt-xent objective
double infonce_oracle(const std::vector<double>& e1,
                      const std::vector<double>& e2, int B, int D, double tau) {
  const int rows = 2 * B;
  std::vector<double> z(rows * D);
  for (int i = 0; i < rows; ++i) {
    const double* src = (i < B) ? &e1[i * D] : &e2[(i - B) * D];
    double ssq = 0;
    for (int j = 0; j < D; ++j) ssq += src[j] * src[j];
    const double inv = 1.0 / std::sqrt(ssq + 1e-12);
    for (int j = 0; j < D; ++j) z[i * D + j] = src[j] * inv;
  }
  double total = 0;
  for (int i = 0; i < rows; ++i) {
    const int partner = (i + B) % rows;
    double denom = 0, spos = 0;
    for (int j = 0; j < rows; ++j) {
      if (j == i) continue;
      double s = 0;
      for (int d = 0; d < D; ++d) s += z[i * D + d] * z[j * D + d];
      s /= tau;
      denom += std::exp(s);
      if (j == partner) spos = s;
    }
    total += std::log(denom) - spos;
  }
  return total / rows;
}

// B=4 batch whose columns have exactly unit (unbiased) variance, zero mean,
// and zero cross-covariance: the three zero-mean Hadamard sign columns
// h1=(1,1,-1,-1), h2=(1,-1,1,-1), h3=(1,-1,-1,1), scaled to unit variance.
Tensor<double> decorrelated_unit_batch() {
  const double c = std::sqrt(3.0) / 2.0;
  std::vector<double> m = {
      c,  c,  c,
      c,  -c, -c,
      -c, c,  -c,
      -c, -c, c};
  return Tensor<double>::from({4, 3}, std::move(m));
}

}  // namespace

TEST_CASE("vicreg: identical decorrelated unit-variance batch gives zero") {
  auto e = decorrelated_unit_batch();
  VicRegParams<double> p;
  const double loss = vicreg_loss(e, e, p).item();
  CHECK(std::abs(loss) < 1e-9);
}

TEST_CASE("vicreg: constant batch hits the variance hinge exactly") {
  auto e = Tensor<double>::full({6, 8}, 0.37);
  VicRegParams<double> p;  // lambda=mu=25, nu=1, gamma=1, eps=0
  const double loss = vicreg_loss(e, e, p).item();
  CHECK(std::abs(loss - 2.0 * 25.0 * 1.0) < 1e-9);
}

TEST_CASE("vicreg: matches the brute-force oracle on random inputs") {
  Rng rng(50);
  VicRegParams<double> p;
  for (int trial = 0; trial < 10; ++trial) {
    const int B = 8, D = 16;
    auto e1 = testutil::random_tensor<double>({B, D}, rng);
    auto e2 = testutil::random_tensor<double>({B, D}, rng);
    const double got = vicreg_loss(e1, e2, p).item();
    const double want = vicreg_oracle(e1.values(), e2.values(), B, D, p);
    CHECK(std::abs(got - want) < 1e-10);
  }
}

TEST_CASE("vicreg: exactly symmetric in its arguments") {
  Rng rng(51);
  VicRegParams<double> p;
  auto e1 = testutil::random_tensor<double>({5, 7}, rng);
  auto e2 = testutil::random_tensor<double>({5, 7}, rng);
  CHECK(vicreg_loss(e1, e2, p).item() == vicreg_loss(e2, e1, p).item());
}

TEST_CASE("vicreg: degenerate batch and shape mismatch are rejected") {
  VicRegParams<double> p;
  auto one = Tensor<double>::zeros({1, 4});
  CHECK_THROWS_AS(vicreg_loss(one, one, p), NumericError);
  auto a = Tensor<double>::zeros({4, 4});
  auto b = Tensor<double>::zeros({4, 5});
  CHECK_THROWS_AS(vicreg_loss(a, b, p), ShapeError);
}

TEST_CASE("infonce: all-identical embeddings give log(2B-1)") {
  InfoNceParams<double> p;  // tau = 0.5
  for (int B : {2, 4, 8}) {
    std::vector<double> row = {0.3, -1.2, 0.5, 2.0};
    std::vector<double> vals;
    for (int b = 0; b < B; ++b) vals.insert(vals.end(), row.begin(), row.end());
    auto e = Tensor<double>::from({B, 4}, vals);
    const double loss = infonce_loss(e, e, p).item();
    CHECK(std::abs(loss - std::log(2.0 * B - 1.0)) < 1e-9);
  }
}

TEST_CASE("infonce: B=2 hand-summed anchor cases") {
  InfoNceParams<double> p;  // tau = 0.5
  // aligned positives, orthogonal negatives:
  // every anchor sees denom = e^{1/tau} + 2, pos = 1/tau
  auto e = Tensor<double>::from({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
  const double loss = infonce_loss(e, e, p).item();
  const double want = std::log(std::exp(2.0) + 2.0) - 2.0;
  CHECK(std::abs(loss - want) < 1e-9);

  // everything orthogonal: uniform similarities -> log(2B-1) = log 3
  auto a = Tensor<double>::from({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
  auto b = Tensor<double>::from({2, 4}, {0, 0, 1, 0, 0, 0, 0, 1});
  CHECK(std::abs(infonce_loss(a, b, p).item() - std::log(3.0)) < 1e-9);
}

TEST_CASE("infonce: matches the brute-force oracle on random inputs") {
  Rng rng(52);
  InfoNceParams<double> p;
  for (int trial = 0; trial < 10; ++trial) {
    const int B = 8, D = 16;
    auto e1 = testutil::random_tensor<double>({B, D}, rng);
    auto e2 = testutil::random_tensor<double>({B, D}, rng);
    const double got = infonce_loss(e1, e2, p).item();
    const double want = infonce_oracle(e1.values(), e2.values(), B, D, p.tau);
    CHECK(std::abs(got - want) < 1e-10);
  }
}

TEST_CASE("infonce: non-negative and symmetric under view swap") {
  Rng rng(53);
  InfoNceParams<double> p;
  for (int trial = 0; trial < 10; ++trial) {
    auto e1 = testutil::random_tensor<double>({6, 8}, rng);
    auto e2 = testutil::random_tensor<double>({6, 8}, rng);
    const double l12 = infonce_loss(e1, e2, p).item();
    const double l21 = infonce_loss(e2, e1, p).item();
    CHECK(l12 >= 0.0);
    CHECK(std::abs(l12 - l21) < 1e-12);
  }
}

TEST_CASE("chunking: even split sends the remainder to the last chunk") {
  auto spec = ChunkSpec::even(8192, 19);
  REQUIRE(spec.sizes.size() == 19);
  for (int i = 0; i < 18; ++i) CHECK(spec.sizes[i] == 431);
  CHECK(spec.sizes.back() == 434);
  CHECK(spec.total() == 8192);
}

TEST_CASE("chunking: single chunk is the identity") {
  Rng rng(54);
  auto e = testutil::random_tensor<double>({3, 10}, rng);
  auto chunks = chunk_embedding(e, ChunkSpec::even(10, 1));
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].values() == e.values());
}

TEST_CASE("chunking: concat reconstructs bit-exactly, mismatches rejected") {
  Rng rng(55);
  auto e = testutil::random_tensor<float>({4, 23}, rng);
  ChunkSpec spec;
  spec.sizes = {5, 1, 9, 8};
  auto chunks = chunk_embedding(e, spec);
  auto rebuilt = concat(chunks, 1);
  CHECK(testutil::bitwise_equal_f(rebuilt.values(), e.values()));

  ChunkSpec bad;
  bad.sizes = {5, 5};
  CHECK_THROWS_AS(chunk_embedding(e, bad), ShapeError);
}

namespace {
ArchitectureSpec splicer_spec(std::vector<std::int64_t> sizes) {
  ArchitectureSpec spec;
  spec.kind = ArchitectureKind::splicer;
  spec.chunk_spec = ChunkSpec{};
  spec.chunk_spec->sizes = std::move(sizes);
  return spec;
}
}  // namespace

TEST_CASE("splicer: cross-chunk gradients are exactly isolated") {
  Rng rng(56);
  BaseLoss<double> base;
  auto spec = splicer_spec({6, 10});
  auto p1 = testutil::random_tensor<double>({5, 16}, rng, 1.0, true);
  auto p2 = testutil::random_tensor<double>({5, 16}, rng, 1.0, true);
  auto c0 = testutil::random_tensor<double>({5, 6}, rng);
  auto c1 = testutil::random_tensor<double>({5, 10}, rng);

  auto grad_for = [&](const Tensor<double>& comp1) {
    p1.zero_grad();
    p2.zero_grad();
    backward(splicer_loss<double>({p1, p2}, {{c0}, {comp1}}, spec, base));
    return p1.grad();
  };
  auto g_before = grad_for(c1);
  auto c1_perturbed = testutil::random_tensor<double>({5, 10}, rng, 3.0);
  auto g_after = grad_for(c1_perturbed);

  // chunk 0 (columns 0..5) bitwise unchanged, chunk 1 affected
  bool chunk0_same = true, chunk1_same = true;
  for (int r = 0; r < 5; ++r) {
    for (int j = 0; j < 16; ++j) {
      const bool same = g_before[r * 16 + j] == g_after[r * 16 + j];
      if (j < 6) chunk0_same &= same; else chunk1_same &= same;
    }
  }
  CHECK(chunk0_same);
  CHECK(!chunk1_same);
}

TEST_CASE("splicer: zero embeddings give the hinge constant per term") {
  BaseLoss<double> base;  // vicreg defaults
  auto spec = splicer_spec({4, 4});
  auto z = Tensor<double>::zeros({6, 8});
  auto c = Tensor<double>::zeros({6, 4});
  // 2 chunks x (2 component pairings + 1 primary-primary) = 6 terms of 2*mu*gamma
  const double loss = splicer_loss<double>({z, z}, {{c}, {c}}, spec, base).item();
  CHECK(std::abs(loss - 6 * 50.0) < 1e-9);
}

TEST_CASE("splicer: single full-width chunk equals the sigma_je configuration") {
  Rng rng(57);
  BaseLoss<double> base;
  auto spec = splicer_spec({12});
  for (int trial = 0; trial < 5; ++trial) {
    auto p1 = testutil::random_tensor<double>({6, 12}, rng);
    auto p2 = testutil::random_tensor<double>({6, 12}, rng);
    auto c = testutil::random_tensor<double>({6, 12}, rng);
    const double sp = splicer_loss<double>({p1, p2}, {{c}}, spec, base).item();
    const double sj = sigma_je_loss<double>({p1, p2}, {{c}}, base).item();
    CHECK(std::abs(sp - sj) < 1e-12);
  }
}

TEST_CASE("splicer: chunk width mismatch and empty component list rejected") {
  BaseLoss<double> base;
  auto spec = splicer_spec({4, 4});
  auto p = Tensor<double>::zeros({4, 8});
  auto wrong = Tensor<double>::zeros({4, 5});
  CHECK_THROWS_AS(
      (splicer_loss<double>({p, p}, {{wrong}, {wrong}}, spec, base)),
      ShapeError);
  CHECK_THROWS_AS((splicer_loss<double>({p, p}, {}, spec, base)), ShapeError);
}

TEST_CASE("splicer: per-chunk weights scale their terms") {
  Rng rng(58);
  BaseLoss<double> base;
  auto p1 = testutil::random_tensor<double>({5, 8}, rng);
  auto p2 = testutil::random_tensor<double>({5, 8}, rng);
  auto c0 = testutil::random_tensor<double>({5, 4}, rng);
  auto c1 = testutil::random_tensor<double>({5, 4}, rng);
  auto spec = splicer_spec({4, 4});
  const double uniform =
      splicer_loss<double>({p1, p2}, {{c0}, {c1}}, spec, base).item();
  spec.chunk_spec->weights = {2.0, 2.0};
  const double doubled =
      splicer_loss<double>({p1, p2}, {{c0}, {c1}}, spec, base).item();
  CHECK(std::abs(doubled - 2.0 * uniform) < 1e-9);
}

TEST_CASE("sigma_je: no components reduces to the baseline loss") {
  Rng rng(59);
  BaseLoss<double> base;
  auto p1 = testutil::random_tensor<double>({6, 10}, rng);
  auto p2 = testutil::random_tensor<double>({6, 10}, rng);
  CHECK(sigma_je_loss<double>({p1, p2}, {}, base).item() ==
        vicreg_loss(p1, p2, base.vicreg).item());
}

TEST_CASE("sigma_je: identical embeddings give pair-count times the pair value") {
  Rng rng(60);
  BaseLoss<double> base;
  auto e = testutil::random_tensor<double>({6, 10}, rng);
  const double pair = vicreg_loss(e, e, base.vicreg).item();
  const double total = sigma_je_loss<double>({e, e}, {{e}}, base).item();
  CHECK(std::abs(total - 3.0 * pair) < 1e-12);
}

TEST_CASE("trident: zero for identical decorrelated unit-variance embeddings") {
  BaseLoss<double> base;
  auto e = decorrelated_unit_batch();
  CHECK(std::abs(trident_loss(e, e, e, base).item()) < 1e-9);
}

TEST_CASE("trident: symmetric under permutations, equals pairwise sum") {
  Rng rng(61);
  BaseLoss<double> base;
  auto a = testutil::random_tensor<double>({5, 6}, rng);
  auto b = testutil::random_tensor<double>({5, 6}, rng);
  auto c = testutil::random_tensor<double>({5, 6}, rng);
  const double ref = trident_loss(a, b, c, base).item();
  CHECK(std::abs(trident_loss(b, c, a, base).item() - ref) < 1e-12);
  CHECK(std::abs(trident_loss(c, a, b, base).item() - ref) < 1e-12);
  CHECK(std::abs(trident_loss(b, a, c, base).item() - ref) < 1e-12);
  const double pairwise = vicreg_loss(a, b, base.vicreg).item() +
                          vicreg_loss(a, c, base.vicreg).item() +
                          vicreg_loss(b, c, base.vicreg).item();
  CHECK(std::abs(ref - pairwise) < 1e-12);
}

TEST_CASE("composite losses pass finite-difference checks end to end") {
  Rng rng(62);
  const int B = 6, D = 8;
  BaseLoss<double> vic;
  BaseLoss<double> nce;
  nce.kind = LossKind::infonce;
  // std ~0.5 keeps the variance hinge active but away from its kink
  auto p2 = testutil::random_tensor<double>({B, D}, rng, 0.5);
  auto c0 = testutil::random_tensor<double>({B, D / 2}, rng, 0.5);
  auto c1 = testutil::random_tensor<double>({B, D / 2}, rng, 0.5);
  auto cf = testutil::random_tensor<double>({B, D}, rng, 0.5);

  auto check_fd = [&](const char* name, auto&& fn) {
    auto x0 = testutil::random_tensor<double>({B, D}, rng, 0.5);
    const double err = finite_diff_check<double>(fn, x0, 1e-6);
    INFO("loss: " << name);
    CHECK(err < 1e-6);
  };
  check_fd("vicreg", [&](const Tensor<double>& e) {
    return vicreg_loss(e, p2, vic.vicreg);
  });
  check_fd("infonce", [&](const Tensor<double>& e) {
    return infonce_loss(e, p2, nce.infonce);
  });
  check_fd("splicer_vicreg", [&](const Tensor<double>& e) {
    return splicer_loss<double>({e, p2}, {{c0}, {c1}}, splicer_spec({4, 4}),
                                vic);
  });
  check_fd("splicer_infonce", [&](const Tensor<double>& e) {
    auto spec = splicer_spec({4, 4});
    spec.loss_kind = LossKind::infonce;
    return splicer_loss<double>({e, p2}, {{c0}, {c1}}, spec, nce);
  });
  check_fd("sigma_je", [&](const Tensor<double>& e) {
    return sigma_je_loss<double>({e, p2}, {{cf}}, vic);
  });
  check_fd("trident", [&](const Tensor<double>& e) {
    return trident_loss(e, p2, cf, vic);
  });
  check_fd("chunked_baseline", [&](const Tensor<double>& e) {
    ArchitectureSpec spec;
    spec.kind = ArchitectureKind::baseline_plus_chunking;
    spec.chunk_spec = ChunkSpec::even(D, 2);
    return chunked_baseline_loss<double>({e, p2}, spec, vic);
  });

  // the finite-difference harness itself, run on the vicreg objective
  auto e0 = testutil::random_tensor<double>({8, 16}, rng, 0.5);
  const double err = finite_diff_check<double>(
      [&](const Tensor<double>& e) {
        auto other = Tensor<double>::from({8, 16},
                                          std::vector<double>(128, 0.25));
        return vicreg_loss(e, other, vic.vicreg);
      },
      e0, 1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("composite_loss dispatches and validates per kind") {
  Rng rng(63);
  BaseLoss<double> base;
  auto p1 = testutil::random_tensor<double>({4, 8}, rng);
  auto p2 = testutil::random_tensor<double>({4, 8}, rng);
  auto c = testutil::random_tensor<double>({4, 8}, rng);

  ArchitectureSpec spec;
  spec.kind = ArchitectureKind::baseline;
  CHECK(composite_loss<double>(spec, base, {p1, p2}, {}).item() ==
        vicreg_loss(p1, p2, base.vicreg).item());

  spec.kind = ArchitectureKind::trident;
  CHECK(composite_loss<double>(spec, base, {p1, p2}, {{c}}).item() ==
        trident_loss(p1, p2, c, base).item());

  spec.kind = ArchitectureKind::splicer;
  CHECK_THROWS_AS(composite_loss<double>(spec, base, {p1, p2}, {{c}}),
                  ConfigError);  // chunk_spec missing
}
