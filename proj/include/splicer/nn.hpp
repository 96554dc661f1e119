// nn.hpp — encoders, projector heads, and linear probes.
//
// The encoder is a small conv stack (conv -> batchnorm -> relu per stage,
// stride for downsampling), global average pool, and a linear head to the
// representation. Projectors are MLPs with batchnorm+relu between layers and
// a plain linear final layer. Weight init is Kaiming-uniform, batchnorm
// gamma=1 beta=0, probe weights zero.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "splicer/nn_ops.hpp"
#include "splicer/ops.hpp"
#include "splicer/rng.hpp"
#include "splicer/tensor.hpp"

namespace splicer::nn {

struct ConvStage {
  std::int64_t filters = 32;
  std::int64_t kernel = 3;
  std::int64_t stride = 2;
};

struct EncoderConfig {
  std::int64_t input_channels = 3;
  std::int64_t input_h = 64;
  std::int64_t input_w = 32;
  std::vector<ConvStage> stages = {{32, 3, 2}, {64, 3, 2}, {128, 3, 2},
                                   {128, 3, 2}};
  std::int64_t representation_dim = 128;

  static EncoderConfig desk_default(std::int64_t channels, std::int64_t h,
                                    std::int64_t w) {
    EncoderConfig cfg;
    cfg.input_channels = channels;
    cfg.input_h = h;
    cfg.input_w = w;
    return cfg;
  }

  // spatial size after each stage: conv with pad=kernel/2
  std::pair<std::int64_t, std::int64_t> output_spatial() const {
    std::int64_t h = input_h, w = input_w;
    for (const auto& s : stages) {
      const std::int64_t pad = s.kernel / 2;
      h = (h + 2 * pad - s.kernel) / s.stride + 1;
      w = (w + 2 * pad - s.kernel) / s.stride + 1;
    }
    return {h, w};
  }

  void validate() const {
    check<ConfigError>(input_channels >= 1 && input_h >= 1 && input_w >= 1,
                       "encoder: input dimensions must be positive");
    check<ConfigError>(representation_dim >= 1,
                       "encoder: representation_dim must be >= 1");
    check<ConfigError>(!stages.empty(), "encoder: at least one conv stage");
    std::int64_t h = input_h, w = input_w;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& s = stages[i];
      check<ConfigError>(s.filters >= 1 && s.kernel >= 1 && s.stride >= 1,
                         "encoder: stage ", i, " has non-positive fields");
      const std::int64_t pad = s.kernel / 2;
      h = (h + 2 * pad - s.kernel) / s.stride + 1;
      w = (w + 2 * pad - s.kernel) / s.stride + 1;
      check<ConfigError>(h >= 1 && w >= 1, "encoder: stage ", i,
                         " collapses the spatial extent to ", h, "x", w);
    }
  }

  std::int64_t parameter_count() const {
    std::int64_t count = 0;
    std::int64_t channels = input_channels;
    for (const auto& s : stages) {
      count += s.filters * channels * s.kernel * s.kernel;  // conv
      count += 2 * s.filters;                               // bn gamma/beta
      channels = s.filters;
    }
    count += representation_dim * channels + representation_dim;  // head
    return count;
  }
};

struct ProjectorConfig {
  std::int64_t layers = 3;
  std::int64_t hidden_dim = 512;
  std::int64_t output_dim = 512;
  bool batchnorm = true;
  bool final_linear = true;  // last layer stays a plain linear map

  void validate() const {
    check<ConfigError>(layers >= 1, "projector: layers must be >= 1");
    check<ConfigError>(hidden_dim >= 1 && output_dim >= 1,
                       "projector: widths must be >= 1");
  }

  std::vector<std::pair<std::int64_t, std::int64_t>> layer_dims(
      std::int64_t input_dim) const {
    std::vector<std::pair<std::int64_t, std::int64_t>> dims;
    for (std::int64_t i = 0; i < layers; ++i) {
      const std::int64_t in = (i == 0) ? input_dim : hidden_dim;
      const std::int64_t out = (i == layers - 1) ? output_dim : hidden_dim;
      dims.push_back({in, out});
    }
    return dims;
  }

  std::int64_t parameter_count(std::int64_t input_dim) const {
    std::int64_t count = 0;
    const auto dims = layer_dims(input_dim);
    for (std::size_t i = 0; i < dims.size(); ++i) {
      count += dims[i].second * dims[i].first + dims[i].second;
      const bool affine_after =
          batchnorm && (i + 1 < dims.size() || !final_linear);
      if (affine_after) count += 2 * dims[i].second;
    }
    return count;
  }
};

struct LinearProbeConfig {
  std::int64_t input_dim = 128;
  std::int64_t classes = 2;
  void validate() const {
    check<ConfigError>(classes >= 2, "probe: needs at least 2 classes");
    check<ConfigError>(input_dim >= 1, "probe: input_dim must be >= 1");
  }
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  std::vector<T>* data;
};

namespace detail_nn {

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> vals(static_cast<std::size_t>(numel(shape)));
  for (auto& v : vals) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from(std::move(shape), std::move(vals), true);
}

}  // namespace detail_nn

// --------------------------------------------------------------- encoder

template <typename T>
class Encoder {
 public:
  Encoder(EncoderConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::int64_t channels = cfg_.input_channels;
    for (std::size_t i = 0; i < cfg_.stages.size(); ++i) {
      const auto& s = cfg_.stages[i];
      Stage stage{
          detail_nn::kaiming_uniform<T>(
              {s.filters, channels, s.kernel, s.kernel},
              channels * s.kernel * s.kernel, rng),
          Tensor<T>::full({s.filters}, T(1), true),
          Tensor<T>::zeros({s.filters}, true),
          BatchNormState<T>(static_cast<std::size_t>(s.filters))};
      stages_.push_back(std::move(stage));
      channels = s.filters;
    }
    head_w_ = detail_nn::kaiming_uniform<T>({cfg_.representation_dim, channels},
                                            channels, rng);
    head_b_ = Tensor<T>::zeros({cfg_.representation_dim}, true);
  }

  // x[B, C, H, W] -> representations [B, representation_dim]
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    check<ConfigError>(x.ndim() == 4 && x.dim(1) == cfg_.input_channels &&
                           x.dim(2) == cfg_.input_h && x.dim(3) == cfg_.input_w,
                       "encoder: input ", shape_str(x.shape()),
                       " does not match configured [*, ", cfg_.input_channels,
                       ", ", cfg_.input_h, ", ", cfg_.input_w, "]");
    Tensor<T> h = x;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const auto& scfg = cfg_.stages[i];
      auto& stage = stages_[i];
      h = conv2d(h, stage.conv_w, scfg.stride, scfg.kernel / 2);
      h = batchnorm2d<T>(h, stage.gamma, stage.beta, T(1e-5), train,
                         &stage.bn);
      h = relu(h);
    }
    return linear(spatial_mean(h), head_w_, head_b_);
  }

  const EncoderConfig& config() const { return cfg_; }

  std::vector<NamedParam<T>> parameters() {
    std::vector<NamedParam<T>> params;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const std::string p = "stage" + std::to_string(i) + ".";
      params.push_back({p + "conv.w", stages_[i].conv_w});
      params.push_back({p + "bn.gamma", stages_[i].gamma});
      params.push_back({p + "bn.beta", stages_[i].beta});
    }
    params.push_back({"head.w", head_w_});
    params.push_back({"head.b", head_b_});
    return params;
  }

  std::vector<NamedBuffer<T>> buffers() {
    std::vector<NamedBuffer<T>> bufs;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const std::string p = "stage" + std::to_string(i) + ".bn.";
      bufs.push_back({p + "running_mean", &stages_[i].bn.mean});
      bufs.push_back({p + "running_var", &stages_[i].bn.var});
    }
    return bufs;
  }

 private:
  struct Stage {
    Tensor<T> conv_w;
    Tensor<T> gamma, beta;
    BatchNormState<T> bn;
  };
  EncoderConfig cfg_;
  std::vector<Stage> stages_;
  Tensor<T> head_w_, head_b_;
};

// --------------------------------------------------------------- projector

template <typename T>
class Projector {
 public:
  Projector(ProjectorConfig cfg, std::int64_t input_dim, Rng& rng)
      : cfg_(std::move(cfg)), input_dim_(input_dim) {
    cfg_.validate();
    for (auto [in, out] : cfg_.layer_dims(input_dim_)) {
      Layer layer{detail_nn::kaiming_uniform<T>({out, in}, in, rng),
                  Tensor<T>::zeros({out}, true),
                  Tensor<T>::full({out}, T(1), true),
                  Tensor<T>::zeros({out}, true),
                  BatchNormState<T>(static_cast<std::size_t>(out))};
      layers_.push_back(std::move(layer));
    }
  }

  // z[B, input_dim] -> embeddings [B, output_dim]
  Tensor<T> forward(const Tensor<T>& z, bool train) {
    check<ConfigError>(z.ndim() == 2 && z.dim(1) == input_dim_,
                       "projector: input ", shape_str(z.shape()),
                       " does not match configured width ", input_dim_);
    Tensor<T> h = z;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& layer = layers_[i];
      h = linear(h, layer.w, layer.b);
      const bool last = (i + 1 == layers_.size());
      if (last && cfg_.final_linear) break;
      if (cfg_.batchnorm) {
        h = batchnorm<T>(h, layer.gamma, layer.beta, T(1e-5), train,
                         &layer.bn);
      }
      h = relu(h);
    }
    return h;
  }

  // Square layers only; used to wire a pass-through head.
  void init_identity() {
    for (auto& layer : layers_) {
      const std::int64_t out = layer.w.dim(0), in = layer.w.dim(1);
      check<ConfigError>(out == in,
                         "projector: identity init needs square layers, got ",
                         out, "x", in);
      auto& w = layer.w.leaf_values();
      std::fill(w.begin(), w.end(), T(0));
      for (std::int64_t i = 0; i < out; ++i) w[i * in + i] = T(1);
      auto& b = layer.b.leaf_values();
      std::fill(b.begin(), b.end(), T(0));
    }
  }

  const ProjectorConfig& config() const { return cfg_; }
  std::int64_t input_dim() const { return input_dim_; }
  std::int64_t output_dim() const { return cfg_.output_dim; }

  std::vector<NamedParam<T>> parameters() {
    std::vector<NamedParam<T>> params;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string p = "layer" + std::to_string(i) + ".";
      params.push_back({p + "w", layers_[i].w});
      params.push_back({p + "b", layers_[i].b});
      const bool affine_after =
          cfg_.batchnorm && (i + 1 < layers_.size() || !cfg_.final_linear);
      if (affine_after) {
        params.push_back({p + "bn.gamma", layers_[i].gamma});
        params.push_back({p + "bn.beta", layers_[i].beta});
      }
    }
    return params;
  }

  std::vector<NamedBuffer<T>> buffers() {
    std::vector<NamedBuffer<T>> bufs;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const bool affine_after =
          cfg_.batchnorm && (i + 1 < layers_.size() || !cfg_.final_linear);
      if (affine_after) {
        const std::string p = "layer" + std::to_string(i) + ".bn.";
        bufs.push_back({p + "running_mean", &layers_[i].bn.mean});
        bufs.push_back({p + "running_var", &layers_[i].bn.var});
      }
    }
    return bufs;
  }

 private:
  struct Layer {
    Tensor<T> w, b;
    Tensor<T> gamma, beta;
    BatchNormState<T> bn;
  };
  ProjectorConfig cfg_;
  std::int64_t input_dim_;
  std::vector<Layer> layers_;
};

// --------------------------------------------------------------- probe

// Linear classifier with softmax activation, trained on frozen
// representations. Zero init, so the untrained probe outputs the uniform
// distribution.
template <typename T>
class LinearProbe {
 public:
  explicit LinearProbe(LinearProbeConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    w_ = Tensor<T>::zeros({cfg_.classes, cfg_.input_dim}, true);
    b_ = Tensor<T>::zeros({cfg_.classes}, true);
  }

  Tensor<T> logits(const Tensor<T>& z) {
    check<ConfigError>(z.ndim() == 2 && z.dim(1) == cfg_.input_dim,
                       "probe: input ", shape_str(z.shape()),
                       " does not match configured width ", cfg_.input_dim);
    return linear(z, w_, b_);
  }

  // class probabilities [B x classes]; rows sum to 1
  Tensor<T> forward(const Tensor<T>& z) { return softmax(logits(z)); }

  Tensor<T> loss(const Tensor<T>& z, const std::vector<int>& labels) {
    return nll_loss(log_softmax(logits(z)), labels);
  }

  std::vector<int> predict(const Tensor<T>& z) {
    NoGradGuard ng;
    auto p = logits(z);
    std::vector<int> out(static_cast<std::size_t>(p.dim(0)));
    const std::int64_t classes = p.dim(1);
    for (std::int64_t r = 0; r < p.dim(0); ++r) {
      const T* row = p.values().data() + r * classes;
      int best = 0;
      for (std::int64_t c = 1; c < classes; ++c) {
        if (row[c] > row[best]) best = static_cast<int>(c);
      }
      out[static_cast<std::size_t>(r)] = best;
    }
    return out;
  }

  const LinearProbeConfig& config() const { return cfg_; }

  std::vector<NamedParam<T>> parameters() {
    return {{"w", w_}, {"b", b_}};
  }

 private:
  LinearProbeConfig cfg_;
  Tensor<T> w_, b_;
};

}  // namespace splicer::nn
