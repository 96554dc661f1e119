// data.hpp — dataset ingestion and construction.
//
// Covers the canonical-format loaders (IDX digits, CIFAR-10 binary batches),
// the MNIST-CIFAR composite builder with its part-randomization protocol,
// the synthetic multiplex generator, channel normalization, and the
// augmentation pipeline. All constructors are pure functions of
// (sources, config, seed); pixel data is float32 in [0,1] unless a
// normalization scheme has been applied.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "splicer/error.hpp"
#include "splicer/rng.hpp"

namespace splicer::data {

// ---------------------------------------------------------------- images

struct Image {
  std::int64_t channels = 0, height = 0, width = 0;
  std::vector<float> pixels;  // channel-major, row-major within a channel

  std::size_t size() const { return pixels.size(); }
  float& at(std::int64_t c, std::int64_t y, std::int64_t x) {
    return pixels[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  float at(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return pixels[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  static Image zeros(std::int64_t c, std::int64_t h, std::int64_t w) {
    Image img;
    img.channels = c;
    img.height = h;
    img.width = w;
    img.pixels.assign(static_cast<std::size_t>(c * h * w), 0.0f);
    return img;
  }
};

struct LabeledImages {
  std::vector<Image> images;
  std::vector<int> labels;
  std::size_t size() const { return images.size(); }
};

// ---------------------------------------------------------------- loaders

// IDX image/label pair (big-endian magic 0x00000803 / 0x00000801).
// Pixels scale to [0,1].
LabeledImages load_mnist(const std::string& images_path,
                         const std::string& labels_path);
// Convenience: reads <dir>/{train|t10k}-images-idx3-ubyte (+labels).
LabeledImages load_mnist_split(const std::string& dir, bool train);

// CIFAR-10 binary batches (3073-byte records). Batches concatenate.
LabeledImages load_cifar10(const std::vector<std::string>& batch_paths);
LabeledImages load_cifar10_split(const std::string& dir, bool train);

// Writers in the same canonical formats (round-trip fixtures).
void save_mnist(const std::string& images_path, const std::string& labels_path,
                const LabeledImages& set);
void save_cifar10(const std::string& path, const LabeledImages& set);

// ------------------------------------------------------------ mnist-cifar

constexpr int kCifarAutomobile = 1;
constexpr int kCifarTruck = 9;

struct MnistCifarRecord {
  Image mnist_part;  // 1 x 28 x 28
  Image cifar_part;  // 3 x 32 x 32
  int binary_label = 0;
  std::int64_t id = 0;
  std::int64_t mnist_src = -1;  // index into the source set
  std::int64_t cifar_src = -1;
};

struct MnistCifarDataset {
  std::vector<MnistCifarRecord> records;
  std::size_t size() const { return records.size(); }
};

// Pairs digit-0 with automobile and digit-1 with truck, uniformly at random
// without replacement; class balance within one record of 50/50.
MnistCifarDataset build_mnist_cifar(const LabeledImages& mnist,
                                    const LabeledImages& cifar,
                                    std::size_t count, std::uint64_t seed);

enum class RandomizationMode { rnone, rmnist, rcifar };

std::string mode_name(RandomizationMode mode);
RandomizationMode parse_mode(const std::string& name);

// rmnist/rcifar replace the named part of every record with that of a
// uniformly shuffled other record; labels and the untouched part stay
// bit-identical. rnone is the identity.
MnistCifarDataset apply_randomization(const MnistCifarDataset& set,
                                      RandomizationMode mode,
                                      std::uint64_t seed);

// 3 x 64 x 32 composite: the digit zero-padded 28->32, replicated to 3
// channels, stacked above the CIFAR image.
Image compose_mnist_cifar(const MnistCifarRecord& record);
// components = [digit half, photo half], fixed spatial split of the composite
std::vector<Image> decompose_mnist_cifar(const Image& composite);

// ---------------------------------------------------------------- dataset

// Generic training set: primaries with aligned component lists and one or
// more label sets keyed by task name.
struct Dataset {
  std::vector<Image> primaries;
  std::vector<std::vector<Image>> components;
  std::map<std::string, std::vector<int>> tasks;
  std::vector<std::int64_t> ids;

  std::size_t size() const { return primaries.size(); }
  std::size_t components_per_sample() const {
    return components.empty() ? 0 : components[0].size();
  }
  const std::vector<int>& labels(const std::string& task) const;
  int num_classes(const std::string& task) const;
};

// Materializes composites + parts; emits task "binary".
Dataset to_dataset(const MnistCifarDataset& set);

// ------------------------------------------------------------- multiplex

enum class ChannelKind { simple_high_variance, complex_low_variance, noise };

struct SyntheticMultiplexConfig {
  std::vector<ChannelKind> channel_kinds = {
      ChannelKind::simple_high_variance, ChannelKind::complex_low_variance,
      ChannelKind::complex_low_variance, ChannelKind::complex_low_variance,
      ChannelKind::complex_low_variance, ChannelKind::complex_low_variance,
      ChannelKind::complex_low_variance, ChannelKind::noise};
  std::int64_t image_size = 64;
  int simple_classes = 4;   // blob shape in the simple channel
  int complex_classes = 4;  // glyph shape across the complex channels
  double intensity_scale = 100.0;  // complex-channel amplitudes divided by this
  double noise_std = 0.02;         // additive noise on the simple channel
  double glyph_presence = 0.85;    // chance a complex channel carries glyphs

  std::int64_t n_channels() const {
    return static_cast<std::int64_t>(channel_kinds.size());
  }
  void validate() const;
};

// Samples' primaries are the full hyperstack; components are the individual
// channels. Emits tasks "simple" (decidable from the high-variance channel
// alone) and "complex" (decidable only from the low-variance channels);
// the two label streams are drawn independently.
Dataset generate_synthetic_multiplex(const SyntheticMultiplexConfig& cfg,
                                     std::size_t count, std::uint64_t seed);

// ------------------------------------------------------------- normalize

enum class NormalizationScheme { none, normalize_only, clip_and_normalize };

std::string scheme_name(NormalizationScheme scheme);
NormalizationScheme parse_scheme(const std::string& name);

struct ChannelStats {
  std::vector<float> mean, stddev;  // post-clip when clipping is active
  std::vector<float> lo, hi;        // 5th/95th percentile clip bounds
};

// Statistics over the training split's primary images, per channel.
ChannelStats compute_channel_stats(const Dataset& train,
                                   NormalizationScheme scheme);

// Applies the scheme in place to primaries and components using train-split
// statistics only. Component c uses channel c's statistics when components
// are single channels of the primary; otherwise components are left as-is.
void normalize_channels(Dataset& set, NormalizationScheme scheme,
                        const ChannelStats& stats);

// --------------------------------------------------------------- augment

enum class AugmentRegime { identity, standard, multiplex };

std::string regime_name(AugmentRegime regime);
AugmentRegime parse_regime(const std::string& name);

// Random resized crop (area scale 0.6..1.0), horizontal flip (p=0.5),
// brightness/contrast jitter (+/-0.2) — per-channel jitter in the multiplex
// regime, shared across channels otherwise. Output clamps to [0,1] when
// clamp is set (disable for normalized data).
Image augment(const Image& img, AugmentRegime regime, Rng& rng,
              bool clamp = true);

// ------------------------------------------------------------ containers

// Binary dataset containers ("SPLD" generic / "SPLM" mnist-cifar parts).
void save_dataset(const std::string& path, const Dataset& set);
Dataset load_dataset(const std::string& path);
void save_mnist_cifar_dataset(const std::string& path,
                              const MnistCifarDataset& set);
MnistCifarDataset load_mnist_cifar_dataset(const std::string& path);

}  // namespace splicer::data
