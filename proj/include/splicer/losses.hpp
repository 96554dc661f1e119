// losses.hpp — joint-embedding losses and the composite training objectives.
//
// Two base losses (VICReg-style variance/invariance/covariance and the
// NT-Xent contrastive loss) feed four composite objectives: plain two-view
// baseline, full-width multi-branch aggregation (sigma_je), the three-way
// trident objective, and chunked component registration (splicer), which
// splits the primary embedding into per-component chunks and applies the
// base loss chunk-wise so gradients from component j never touch chunk i!=j.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "splicer/ops.hpp"
#include "splicer/tensor.hpp"

namespace splicer::losses {

// ---------------------------------------------------------------- params

template <typename T>
struct VicRegParams {
  T lambda = T(25);       // invariance weight
  T mu = T(25);           // variance weight
  T nu = T(1);            // covariance weight
  T gamma_target = T(1);  // variance hinge target
  T eps = T(0);           // variance floor inside the sqrt
};

template <typename T>
struct InfoNceParams {
  T tau = T(0.5);  // temperature
};

enum class LossKind { vicreg, infonce };

enum class ArchitectureKind {
  baseline,
  sigma_je,
  trident,
  splicer,
  baseline_plus_chunking,
};

enum class BranchSharing { shared, per_component };

// ---------------------------------------------------------------- chunking

// Partition of the primary embedding width into contiguous chunks; chunk i
// is registered to component i. Optional per-chunk weights default to 1.
struct ChunkSpec {
  std::vector<std::int64_t> sizes;
  std::vector<double> weights;  // empty = uniform 1.0

  // Even split with the remainder absorbed by the last chunk
  // (e.g. 8192 over 19 -> 18 chunks of 431 plus one of 434).
  static ChunkSpec even(std::int64_t dim, std::int64_t n_chunks) {
    check(n_chunks >= 1, "ChunkSpec: need at least one chunk");
    check(dim >= n_chunks, "ChunkSpec: cannot split width ", dim, " into ",
          n_chunks, " chunks");
    const std::int64_t base = dim / n_chunks;
    ChunkSpec spec;
    spec.sizes.assign(static_cast<std::size_t>(n_chunks), base);
    spec.sizes.back() += dim - base * n_chunks;
    return spec;
  }

  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto v : sizes) s += v;
    return s;
  }

  double weight(std::size_t i) const {
    return weights.empty() ? 1.0 : weights[i];
  }

  void validate(std::int64_t embedding_dim) const {
    check(!sizes.empty(), "ChunkSpec: empty partition");
    for (auto s : sizes) check(s >= 1, "ChunkSpec: chunk sizes must be >= 1");
    check(total() == embedding_dim, "ChunkSpec: chunk sizes sum to ", total(),
          ", embedding width is ", embedding_dim);
    check(weights.empty() || weights.size() == sizes.size(),
          "ChunkSpec: ", weights.size(), " weights for ", sizes.size(),
          " chunks");
  }
};

struct ArchitectureSpec {
  ArchitectureKind kind = ArchitectureKind::baseline;
  LossKind loss_kind = LossKind::vicreg;
  BranchSharing component_encoder_sharing = BranchSharing::per_component;
  BranchSharing component_projector_sharing = BranchSharing::per_component;
  std::optional<ChunkSpec> chunk_spec;
  bool include_primary_primary_term = true;

  bool uses_components() const {
    return kind == ArchitectureKind::sigma_je ||
           kind == ArchitectureKind::trident ||
           kind == ArchitectureKind::splicer;
  }

  void validate() const {
    const bool needs_chunks = kind == ArchitectureKind::splicer ||
                              kind == ArchitectureKind::baseline_plus_chunking;
    check<ConfigError>(chunk_spec.has_value() == needs_chunks,
                       "ArchitectureSpec: chunk_spec must be present exactly "
                       "for the chunked kinds (splicer, "
                       "baseline_plus_chunking)");
  }
};

// ---------------------------------------------------------------- vicreg

// lambda * MSE(e1,e2)
//   + mu * (varhinge(e1) + varhinge(e2))
//   + nu * (covpen(e1) + covpen(e2))
// varhinge = mean_j max(0, gamma - sqrt(var_j + eps)), unbiased column var;
// covpen   = sum of squared off-diagonal covariance entries / D.
template <typename T>
Tensor<T> vicreg_loss(const Tensor<T>& e1, const Tensor<T>& e2,
                      const VicRegParams<T>& p) {
  detail::check_matrix("vicreg_loss", e1);
  detail::check_same_shape("vicreg_loss", e1, e2);
  const std::int64_t batch = e1.dim(0), dim = e1.dim(1);
  check<NumericError>(batch >= 2, "vicreg_loss: degenerate batch of ", batch);

  auto diff = sub(e1, e2);
  auto invariance = mean_all(mul(diff, diff));

  auto side = [&](const Tensor<T>& e) {
    auto stddev = sqrt(add_scalar(col_variance(e), p.eps));
    auto hinge = mean_all(relu(sub_from_scalar(p.gamma_target, stddev)));

    auto centered = sub_rowvec(e, col_mean(e));
    auto cov = scale(matmul(transpose(centered), centered),
                     T(1) / static_cast<T>(batch - 1));
    std::vector<T> mask_vals(static_cast<std::size_t>(dim * dim), T(1));
    for (std::int64_t j = 0; j < dim; ++j) {
      mask_vals[static_cast<std::size_t>(j * dim + j)] = T(0);
    }
    auto offdiag_mask = Tensor<T>::from({dim, dim}, std::move(mask_vals));
    auto covpen = scale(sum_all(mul(mul(cov, cov), offdiag_mask)),
                        T(1) / static_cast<T>(dim));
    return std::make_pair(hinge, covpen);
  };
  auto [h1, c1] = side(e1);
  auto [h2, c2] = side(e2);

  return add(add(scale(invariance, p.lambda),
                 scale(add(h1, h2), p.mu)),
             scale(add(c1, c2), p.nu));
}

// ---------------------------------------------------------------- infonce

// NT-Xent over the 2B l2-normalized embeddings: each row is an anchor, its
// positive is the counterpart view, the denominator runs over the other
// 2B-1 rows.
template <typename T>
Tensor<T> infonce_loss(const Tensor<T>& e1, const Tensor<T>& e2,
                       const InfoNceParams<T>& p) {
  detail::check_matrix("infonce_loss", e1);
  detail::check_same_shape("infonce_loss", e1, e2);
  check<ConfigError>(p.tau > T(0), "infonce_loss: tau must be positive");
  const std::int64_t batch = e1.dim(0);
  check<NumericError>(batch >= 2, "infonce_loss: degenerate batch of ", batch);
  const std::int64_t rows = 2 * batch;

  auto z = l2_normalize(concat<T>({e1, e2}, 0));
  auto sims = scale(matmul(z, transpose(z)), T(1) / p.tau);

  std::vector<T> offdiag(static_cast<std::size_t>(rows * rows), T(1));
  std::vector<T> positive(static_cast<std::size_t>(rows * rows), T(0));
  for (std::int64_t i = 0; i < rows; ++i) {
    offdiag[static_cast<std::size_t>(i * rows + i)] = T(0);
    const std::int64_t partner = (i + batch) % rows;
    positive[static_cast<std::size_t>(i * rows + partner)] = T(1);
  }
  auto offdiag_mask = Tensor<T>::from({rows, rows}, std::move(offdiag));
  auto positive_mask = Tensor<T>::from({rows, rows}, std::move(positive));

  auto denom = row_sum(mul(exp(sims), offdiag_mask));
  auto pos = row_sum(mul(sims, positive_mask));
  return mean_all(sub(log(denom), pos));
}

// ---------------------------------------------------------------- base loss

template <typename T>
struct BaseLoss {
  LossKind kind = LossKind::vicreg;
  VicRegParams<T> vicreg;
  InfoNceParams<T> infonce;

  Tensor<T> operator()(const Tensor<T>& a, const Tensor<T>& b) const {
    return kind == LossKind::vicreg ? vicreg_loss(a, b, vicreg)
                                    : infonce_loss(a, b, infonce);
  }
};

// ---------------------------------------------------------------- chunking

// Contiguous, order-preserving column slices; concatenating them rebuilds e
// bit-exactly and gradients route only into the originating slice.
template <typename T>
std::vector<Tensor<T>> chunk_embedding(const Tensor<T>& e,
                                       const ChunkSpec& spec) {
  detail::check_matrix("chunk_embedding", e);
  spec.validate(e.dim(1));
  std::vector<Tensor<T>> chunks;
  chunks.reserve(spec.sizes.size());
  std::int64_t at = 0;
  for (std::int64_t width : spec.sizes) {
    chunks.push_back(slice_cols(e, at, width));
    at += width;
  }
  return chunks;
}

// ---------------------------------------------------------------- composites

// Per-view-pair rule shared by the composites: every primary view is paired
// with every view of the component (one augmented view per component in the
// default pipeline).
namespace detail_loss {
template <typename T>
void check_views(const char* name, const std::vector<Tensor<T>>& primary) {
  check(primary.size() == 2, name, ": expected exactly 2 primary views, got ",
        primary.size());
}
}  // namespace detail_loss

// Chunked registration: chunk i of each primary view aligns to component i's
// embedding, plus an optional chunk-wise primary-primary term. The base loss
// (including its variance/covariance regularizers) is applied per chunk.
template <typename T>
Tensor<T> splicer_loss(const std::vector<Tensor<T>>& primary_views,
                       const std::vector<std::vector<Tensor<T>>>& component_views,
                       const ArchitectureSpec& spec, const BaseLoss<T>& base) {
  detail_loss::check_views("splicer_loss", primary_views);
  check(!component_views.empty(), "splicer_loss: no components");
  check<ConfigError>(spec.chunk_spec.has_value(),
                     "splicer_loss: missing chunk_spec");
  const ChunkSpec& chunks = *spec.chunk_spec;
  check(chunks.sizes.size() == component_views.size(), "splicer_loss: ",
        chunks.sizes.size(), " chunks for ", component_views.size(),
        " components");
  auto p1 = chunk_embedding(primary_views[0], chunks);
  auto p2 = chunk_embedding(primary_views[1], chunks);

  Tensor<T> total;
  auto accumulate = [&](Tensor<T> term, double weight) {
    if (weight != 1.0) term = scale(term, static_cast<T>(weight));
    total = total.defined() ? add(total, term) : term;
  };
  for (std::size_t i = 0; i < component_views.size(); ++i) {
    const double w = chunks.weight(i);
    for (const auto& view : component_views[i]) {
      check(view.dim(1) == chunks.sizes[i], "splicer_loss: component ", i,
            " embedding width ", view.dim(1), " does not match chunk width ",
            chunks.sizes[i]);
      accumulate(base(p1[i], view), w);
      accumulate(base(p2[i], view), w);
    }
    if (spec.include_primary_primary_term) {
      accumulate(base(p1[i], p2[i]), w);
    }
  }
  return total;
}

// Full-width aggregation: primary<->primary plus every (primary view,
// component view) pair mapped into one shared embedding space.
template <typename T>
Tensor<T> sigma_je_loss(const std::vector<Tensor<T>>& primary_views,
                        const std::vector<std::vector<Tensor<T>>>& component_views,
                        const BaseLoss<T>& base) {
  detail_loss::check_views("sigma_je_loss", primary_views);
  Tensor<T> total = base(primary_views[0], primary_views[1]);
  for (const auto& views : component_views) {
    for (const auto& view : views) {
      total = add(total, base(primary_views[0], view));
      total = add(total, base(primary_views[1], view));
    }
  }
  return total;
}

// Sum of the base loss over the unordered pairs {(1,2), (1,*), (2,*)}.
template <typename T>
Tensor<T> trident_loss(const Tensor<T>& e1, const Tensor<T>& e2,
                       const Tensor<T>& e_star, const BaseLoss<T>& base) {
  return add(add(base(e1, e2), base(e1, e_star)), base(e2, e_star));
}

// Chunk-wise primary-primary alignment with no component branches (the
// chunking-only ablation).
template <typename T>
Tensor<T> chunked_baseline_loss(const std::vector<Tensor<T>>& primary_views,
                                const ArchitectureSpec& spec,
                                const BaseLoss<T>& base) {
  detail_loss::check_views("chunked_baseline_loss", primary_views);
  check<ConfigError>(spec.chunk_spec.has_value(),
                     "chunked_baseline_loss: missing chunk_spec");
  const ChunkSpec& chunks = *spec.chunk_spec;
  auto p1 = chunk_embedding(primary_views[0], chunks);
  auto p2 = chunk_embedding(primary_views[1], chunks);
  Tensor<T> total;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    Tensor<T> term = base(p1[i], p2[i]);
    const double w = chunks.weight(i);
    if (w != 1.0) term = scale(term, static_cast<T>(w));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

// Dispatch on the architecture kind.
template <typename T>
Tensor<T> composite_loss(const ArchitectureSpec& spec, const BaseLoss<T>& base,
                         const std::vector<Tensor<T>>& primary_views,
                         const std::vector<std::vector<Tensor<T>>>& component_views) {
  spec.validate();
  switch (spec.kind) {
    case ArchitectureKind::baseline:
      detail_loss::check_views("baseline", primary_views);
      check(component_views.empty(),
            "baseline: component views are not consumed");
      return base(primary_views[0], primary_views[1]);
    case ArchitectureKind::baseline_plus_chunking:
      check(component_views.empty(),
            "baseline_plus_chunking: component views are not consumed");
      return chunked_baseline_loss(primary_views, spec, base);
    case ArchitectureKind::sigma_je:
      return sigma_je_loss(primary_views, component_views, base);
    case ArchitectureKind::trident: {
      detail_loss::check_views("trident", primary_views);
      check(component_views.size() == 1 && component_views[0].size() == 1,
            "trident: expects exactly one component with one view");
      return trident_loss(primary_views[0], primary_views[1],
                          component_views[0][0], base);
    }
    case ArchitectureKind::splicer:
      return splicer_loss(primary_views, component_views, spec, base);
  }
  throw ConfigError("composite_loss: unknown architecture kind");
}

// ---------------------------------------------------------------- naming

inline std::string kind_name(ArchitectureKind k) {
  switch (k) {
    case ArchitectureKind::baseline: return "baseline";
    case ArchitectureKind::sigma_je: return "sigma_je";
    case ArchitectureKind::trident: return "trident";
    case ArchitectureKind::splicer: return "splicer";
    case ArchitectureKind::baseline_plus_chunking:
      return "baseline_plus_chunking";
  }
  return "?";
}

inline ArchitectureKind parse_kind(const std::string& s) {
  if (s == "baseline") return ArchitectureKind::baseline;
  if (s == "sigma_je") return ArchitectureKind::sigma_je;
  if (s == "trident") return ArchitectureKind::trident;
  if (s == "splicer") return ArchitectureKind::splicer;
  if (s == "baseline_plus_chunking")
    return ArchitectureKind::baseline_plus_chunking;
  throw ConfigError(msg("unknown architecture kind '", s, "'"));
}

inline std::string loss_name(LossKind k) {
  return k == LossKind::vicreg ? "vicreg" : "infonce";
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "vicreg") return LossKind::vicreg;
  if (s == "infonce") return LossKind::infonce;
  throw ConfigError(msg("unknown loss kind '", s, "'"));
}

inline std::string sharing_name(BranchSharing s) {
  return s == BranchSharing::shared ? "shared" : "per_component";
}

inline BranchSharing parse_sharing(const std::string& s) {
  if (s == "shared") return BranchSharing::shared;
  if (s == "per_component") return BranchSharing::per_component;
  throw ConfigError(msg("unknown sharing mode '", s, "'"));
}

}  // namespace splicer::losses
