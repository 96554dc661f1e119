// data_io.cpp — loaders, dataset constructors, normalization, augmentation.

#include "splicer/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "splicer/checkpoint.hpp"  // little-endian scalar helpers

namespace splicer::data {

namespace {

using ckpt::detail_ckpt::read_u32;
using ckpt::detail_ckpt::read_u64;
using ckpt::detail_ckpt::write_u32;
using ckpt::detail_ckpt::write_u64;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check<IoError>(static_cast<bool>(is), "cannot open '", path, "'");
  is.seekg(0, std::ios::end);
  const auto len = is.tellg();
  is.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<std::size_t>(len));
  is.read(reinterpret_cast<char*>(buf.data()), len);
  check<IoError>(static_cast<bool>(is), "failed reading '", path, "'");
  return buf;
}

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_be32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

unsigned char to_byte(float v) {
  const long r = std::lround(v * 255.0f);
  return static_cast<unsigned char>(std::clamp(r, 0l, 255l));
}

}  // namespace

// ---------------------------------------------------------------- loaders

LabeledImages load_mnist(const std::string& images_path,
                         const std::string& labels_path) {
  const auto img_bytes = read_file(images_path);
  check<IoError>(img_bytes.size() >= 16, "IDX image file '", images_path,
                 "' truncated (", img_bytes.size(), " bytes)");
  check<IoError>(be32(img_bytes.data()) == 0x00000803u, "IDX image file '",
                 images_path, "' has magic ", be32(img_bytes.data()),
                 ", expected 0x00000803");
  const std::size_t count = be32(img_bytes.data() + 4);
  const std::size_t rows = be32(img_bytes.data() + 8);
  const std::size_t cols = be32(img_bytes.data() + 12);
  check<IoError>(img_bytes.size() == 16 + count * rows * cols,
                 "IDX image file '", images_path, "' holds ",
                 img_bytes.size() - 16, " pixel bytes, header implies ",
                 count * rows * cols);

  const auto lbl_bytes = read_file(labels_path);
  check<IoError>(lbl_bytes.size() >= 8, "IDX label file '", labels_path,
                 "' truncated");
  check<IoError>(be32(lbl_bytes.data()) == 0x00000801u, "IDX label file '",
                 labels_path, "' has magic ", be32(lbl_bytes.data()),
                 ", expected 0x00000801");
  const std::size_t lbl_count = be32(lbl_bytes.data() + 4);
  check<IoError>(lbl_bytes.size() == 8 + lbl_count, "IDX label file '",
                 labels_path, "' holds ", lbl_bytes.size() - 8,
                 " labels, header implies ", lbl_count);
  check<IoError>(lbl_count == count, "IDX pair mismatch: ", count,
                 " images vs ", lbl_count, " labels");

  LabeledImages out;
  out.images.reserve(count);
  out.labels.reserve(count);
  const unsigned char* px = img_bytes.data() + 16;
  for (std::size_t i = 0; i < count; ++i) {
    Image img = Image::zeros(1, static_cast<std::int64_t>(rows),
                             static_cast<std::int64_t>(cols));
    for (std::size_t p = 0; p < rows * cols; ++p) {
      img.pixels[p] = static_cast<float>(px[i * rows * cols + p]) / 255.0f;
    }
    out.images.push_back(std::move(img));
    out.labels.push_back(static_cast<int>(lbl_bytes[8 + i]));
  }
  return out;
}

LabeledImages load_mnist_split(const std::string& dir, bool train) {
  const std::string stem = train ? "train" : "t10k";
  return load_mnist(dir + "/" + stem + "-images-idx3-ubyte",
                    dir + "/" + stem + "-labels-idx1-ubyte");
}

LabeledImages load_cifar10(const std::vector<std::string>& batch_paths) {
  constexpr std::size_t kRecord = 3073;
  LabeledImages out;
  for (const auto& path : batch_paths) {
    const auto bytes = read_file(path);
    check<IoError>(!bytes.empty(), "CIFAR batch '", path, "' is empty");
    check<IoError>(bytes.size() % kRecord == 0, "CIFAR batch '", path,
                   "' is ", bytes.size(),
                   " bytes, not a multiple of the 3073-byte record");
    const std::size_t count = bytes.size() / kRecord;
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned char* rec = bytes.data() + i * kRecord;
      check<IoError>(rec[0] <= 9, "CIFAR batch '", path, "' record ", i,
                     " has label ", int(rec[0]));
      Image img = Image::zeros(3, 32, 32);
      for (std::size_t p = 0; p < 3072; ++p) {
        img.pixels[p] = static_cast<float>(rec[1 + p]) / 255.0f;
      }
      out.images.push_back(std::move(img));
      out.labels.push_back(static_cast<int>(rec[0]));
    }
  }
  return out;
}

LabeledImages load_cifar10_split(const std::string& dir, bool train) {
  std::vector<std::string> paths;
  if (train) {
    for (int i = 1; i <= 5; ++i) {
      paths.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
    }
  } else {
    paths.push_back(dir + "/test_batch.bin");
  }
  return load_cifar10(paths);
}

void save_mnist(const std::string& images_path, const std::string& labels_path,
                const LabeledImages& set) {
  check<IoError>(!set.images.empty(), "save_mnist: empty set");
  const auto rows = set.images[0].height, cols = set.images[0].width;
  std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
  check<IoError>(static_cast<bool>(imgs), "cannot write '", images_path, "'");
  put_be32(imgs, 0x00000803u);
  put_be32(imgs, static_cast<std::uint32_t>(set.size()));
  put_be32(imgs, static_cast<std::uint32_t>(rows));
  put_be32(imgs, static_cast<std::uint32_t>(cols));
  for (const auto& img : set.images) {
    for (float v : img.pixels) imgs.put(static_cast<char>(to_byte(v)));
  }
  std::ofstream lbls(labels_path, std::ios::binary | std::ios::trunc);
  check<IoError>(static_cast<bool>(lbls), "cannot write '", labels_path, "'");
  put_be32(lbls, 0x00000801u);
  put_be32(lbls, static_cast<std::uint32_t>(set.size()));
  for (int l : set.labels) lbls.put(static_cast<char>(l));
}

void save_cifar10(const std::string& path, const LabeledImages& set) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check<IoError>(static_cast<bool>(os), "cannot write '", path, "'");
  for (std::size_t i = 0; i < set.size(); ++i) {
    os.put(static_cast<char>(set.labels[i]));
    for (float v : set.images[i].pixels) os.put(static_cast<char>(to_byte(v)));
  }
}

// ------------------------------------------------------------ mnist-cifar

MnistCifarDataset build_mnist_cifar(const LabeledImages& mnist,
                                    const LabeledImages& cifar,
                                    std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> digit[2], photo[2];
  for (std::size_t i = 0; i < mnist.size(); ++i) {
    if (mnist.labels[i] == 0) digit[0].push_back(i);
    if (mnist.labels[i] == 1) digit[1].push_back(i);
  }
  for (std::size_t i = 0; i < cifar.size(); ++i) {
    if (cifar.labels[i] == kCifarAutomobile) photo[0].push_back(i);
    if (cifar.labels[i] == kCifarTruck) photo[1].push_back(i);
  }
  const std::size_t want[2] = {count / 2, count - count / 2};
  for (int c = 0; c < 2; ++c) {
    check<ConfigError>(want[c] <= digit[c].size() && want[c] <= photo[c].size(),
                       "build_mnist_cifar: need ", want[c], " class-", c,
                       " pairs but have ", digit[c].size(), " digits and ",
                       photo[c].size(), " photos");
  }
  Rng rng = Rng::derived(seed, {0x6d63});  // "mc"
  for (int c = 0; c < 2; ++c) {
    rng.shuffle(digit[c]);
    rng.shuffle(photo[c]);
  }
  MnistCifarDataset out;
  out.records.reserve(count);
  std::size_t used[2] = {0, 0};
  std::vector<int> order;
  order.reserve(count);
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < want[c]; ++i) order.push_back(c);
  }
  rng.shuffle(order);
  for (std::size_t i = 0; i < count; ++i) {
    const int c = order[i];
    MnistCifarRecord rec;
    rec.mnist_src = static_cast<std::int64_t>(digit[c][used[c]]);
    rec.cifar_src = static_cast<std::int64_t>(photo[c][used[c]]);
    rec.mnist_part = mnist.images[static_cast<std::size_t>(rec.mnist_src)];
    rec.cifar_part = cifar.images[static_cast<std::size_t>(rec.cifar_src)];
    rec.binary_label = c;
    rec.id = static_cast<std::int64_t>(i);
    ++used[c];
    check<ConfigError>(rec.mnist_part.channels == 1 &&
                           rec.mnist_part.height == 28 &&
                           rec.mnist_part.width == 28,
                       "build_mnist_cifar: digit images must be 1x28x28");
    check<ConfigError>(rec.cifar_part.channels == 3 &&
                           rec.cifar_part.height == 32 &&
                           rec.cifar_part.width == 32,
                       "build_mnist_cifar: photo images must be 3x32x32");
    out.records.push_back(std::move(rec));
  }
  return out;
}

std::string mode_name(RandomizationMode mode) {
  switch (mode) {
    case RandomizationMode::rnone: return "rnone";
    case RandomizationMode::rmnist: return "rmnist";
    case RandomizationMode::rcifar: return "rcifar";
  }
  return "?";
}

RandomizationMode parse_mode(const std::string& name) {
  if (name == "rnone") return RandomizationMode::rnone;
  if (name == "rmnist") return RandomizationMode::rmnist;
  if (name == "rcifar") return RandomizationMode::rcifar;
  throw ConfigError(msg("unknown randomization mode '", name, "'"));
}

MnistCifarDataset apply_randomization(const MnistCifarDataset& set,
                                      RandomizationMode mode,
                                      std::uint64_t seed) {
  MnistCifarDataset out = set;
  if (mode == RandomizationMode::rnone || set.records.empty()) return out;
  Rng rng = Rng::derived(seed, {0x72616e64, static_cast<std::uint64_t>(mode)});
  const auto perm = rng.permutation(set.records.size());
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    if (mode == RandomizationMode::rmnist) {
      out.records[i].mnist_part = set.records[perm[i]].mnist_part;
      out.records[i].mnist_src = set.records[perm[i]].mnist_src;
    } else {
      out.records[i].cifar_part = set.records[perm[i]].cifar_part;
      out.records[i].cifar_src = set.records[perm[i]].cifar_src;
    }
  }
  return out;
}

Image compose_mnist_cifar(const MnistCifarRecord& record) {
  Image out = Image::zeros(3, 64, 32);
  for (std::int64_t y = 0; y < 28; ++y) {
    for (std::int64_t x = 0; x < 28; ++x) {
      const float v = record.mnist_part.at(0, y, x);
      for (std::int64_t c = 0; c < 3; ++c) out.at(c, y + 2, x + 2) = v;
    }
  }
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < 32; ++y) {
      for (std::int64_t x = 0; x < 32; ++x) {
        out.at(c, y + 32, x) = record.cifar_part.at(c, y, x);
      }
    }
  }
  return out;
}

std::vector<Image> decompose_mnist_cifar(const Image& composite) {
  check(composite.channels == 3 && composite.height == 64 &&
            composite.width == 32,
        "decompose_mnist_cifar: expected a 3x64x32 composite");
  Image top = Image::zeros(3, 32, 32), bottom = Image::zeros(3, 32, 32);
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < 32; ++y) {
      for (std::int64_t x = 0; x < 32; ++x) {
        top.at(c, y, x) = composite.at(c, y, x);
        bottom.at(c, y, x) = composite.at(c, y + 32, x);
      }
    }
  }
  return {std::move(top), std::move(bottom)};
}

const std::vector<int>& Dataset::labels(const std::string& task) const {
  const auto it = tasks.find(task);
  check<ConfigError>(it != tasks.end(), "dataset has no task '", task, "'");
  return it->second;
}

int Dataset::num_classes(const std::string& task) const {
  int top = 0;
  for (int l : labels(task)) top = std::max(top, l);
  return top + 1;
}

Dataset to_dataset(const MnistCifarDataset& set) {
  Dataset out;
  out.primaries.reserve(set.size());
  out.components.reserve(set.size());
  std::vector<int> labels;
  labels.reserve(set.size());
  for (const auto& rec : set.records) {
    Image composite = compose_mnist_cifar(rec);
    out.components.push_back(decompose_mnist_cifar(composite));
    out.primaries.push_back(std::move(composite));
    labels.push_back(rec.binary_label);
    out.ids.push_back(rec.id);
  }
  out.tasks["binary"] = std::move(labels);
  return out;
}

// ------------------------------------------------------------- multiplex

void SyntheticMultiplexConfig::validate() const {
  bool has_simple = false, has_complex = false;
  for (auto kind : channel_kinds) {
    has_simple |= kind == ChannelKind::simple_high_variance;
    has_complex |= kind == ChannelKind::complex_low_variance;
  }
  check<ConfigError>(has_simple && has_complex,
                     "multiplex config needs at least one simple and one "
                     "complex channel");
  check<ConfigError>(image_size >= 32, "multiplex image_size must be >= 32");
  check<ConfigError>(simple_classes >= 2 && simple_classes <= 4,
                     "simple_classes must be in [2,4]");
  check<ConfigError>(complex_classes >= 2 && complex_classes <= 4,
                     "complex_classes must be in [2,4]");
  check<ConfigError>(intensity_scale >= 1.0, "intensity_scale must be >= 1");
  check<ConfigError>(glyph_presence > 0.0 && glyph_presence <= 1.0,
                     "glyph_presence must be in (0,1]");
}

namespace {

// simple-channel blobs; fill-ratio of the bounding box separates the classes
// (square 1.0, disk ~0.79, diamond 0.5, cross ~0.28)
void draw_simple_shape(Image& chan, int cls, double cx, double cy, double r,
                       float amplitude) {
  for (std::int64_t y = 0; y < chan.height; ++y) {
    for (std::int64_t x = 0; x < chan.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      bool inside = false;
      switch (cls) {
        case 0:  // square
          inside = std::abs(dx) <= r && std::abs(dy) <= r;
          break;
        case 1:  // disk
          inside = dx * dx + dy * dy <= r * r;
          break;
        case 2:  // diamond
          inside = std::abs(dx) + std::abs(dy) <= r;
          break;
        default:  // cross, thin arms
          inside = (std::abs(dx) <= 0.15 * r && std::abs(dy) <= r) ||
                   (std::abs(dy) <= 0.15 * r && std::abs(dx) <= r);
          break;
      }
      if (inside) chan.at(0, y, x) = amplitude;
    }
  }
}

// complex-channel glyphs; aspect ratio + fill separate the classes
void draw_glyph(Image& chan, int cls, std::int64_t gy, std::int64_t gx,
                float amplitude) {
  auto put = [&](std::int64_t y, std::int64_t x) {
    if (y >= 0 && y < chan.height && x >= 0 && x < chan.width) {
      chan.at(0, y, x) = amplitude;
    }
  };
  switch (cls) {
    case 0:  // horizontal bar 3x11
      for (std::int64_t y = 0; y < 3; ++y)
        for (std::int64_t x = 0; x < 11; ++x) put(gy + y, gx + x);
      break;
    case 1:  // vertical bar 11x3
      for (std::int64_t y = 0; y < 11; ++y)
        for (std::int64_t x = 0; x < 3; ++x) put(gy + y, gx + x);
      break;
    case 2:  // solid square 7x7
      for (std::int64_t y = 0; y < 7; ++y)
        for (std::int64_t x = 0; x < 7; ++x) put(gy + y, gx + x);
      break;
    default:  // plus, 11x11 with 3-wide arms
      for (std::int64_t y = 0; y < 11; ++y)
        for (std::int64_t x = 4; x < 7; ++x) put(gy + y, gx + x);
      for (std::int64_t x = 0; x < 11; ++x)
        for (std::int64_t y = 4; y < 7; ++y) put(gy + y, gx + x);
      break;
  }
}

}  // namespace

Dataset generate_synthetic_multiplex(const SyntheticMultiplexConfig& cfg,
                                     std::size_t count, std::uint64_t seed) {
  cfg.validate();
  const std::int64_t S = cfg.image_size;
  Dataset out;
  out.primaries.reserve(count);
  out.components.reserve(count);
  std::vector<int> simple_labels(count), complex_labels(count);

  std::vector<std::size_t> complex_idx;
  for (std::size_t k = 0; k < cfg.channel_kinds.size(); ++k) {
    if (cfg.channel_kinds[k] == ChannelKind::complex_low_variance) {
      complex_idx.push_back(k);
    }
  }

  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::derived(seed, {0x6d70, i});
    const int simple_cls = static_cast<int>(
        rng.uniform_int(static_cast<std::uint64_t>(cfg.simple_classes)));
    const int complex_cls = static_cast<int>(
        rng.uniform_int(static_cast<std::uint64_t>(cfg.complex_classes)));
    simple_labels[i] = simple_cls;
    complex_labels[i] = complex_cls;

    Image stack = Image::zeros(cfg.n_channels(), S, S);
    std::vector<Image> channels;
    channels.reserve(cfg.channel_kinds.size());

    std::size_t forced_channel =
        complex_idx[i % complex_idx.size()];  // at least one channel carries
                                              // the complex glyphs
    for (std::size_t k = 0; k < cfg.channel_kinds.size(); ++k) {
      Image chan = Image::zeros(1, S, S);
      switch (cfg.channel_kinds[k]) {
        case ChannelKind::simple_high_variance: {
          const double r = rng.uniform(S * 0.16, S * 0.25);
          const double cx = S / 2.0 + rng.uniform(-S * 0.1, S * 0.1);
          const double cy = S / 2.0 + rng.uniform(-S * 0.1, S * 0.1);
          const float amp = static_cast<float>(rng.uniform(0.6, 1.0));
          draw_simple_shape(chan, simple_cls, cx, cy, r, amp);
          if (cfg.noise_std > 0) {
            for (auto& v : chan.pixels) {
              v = std::clamp(
                  v + static_cast<float>(rng.gaussian() * cfg.noise_std), 0.0f,
                  1.0f);
            }
          }
          break;
        }
        case ChannelKind::complex_low_variance: {
          const bool present =
              (k == forced_channel) || rng.bernoulli(cfg.glyph_presence);
          if (present) {
            // glyph boxes are kept disjoint (1px apart) so each one stays an
            // isolated connected component
            const int glyphs = 2 + static_cast<int>(rng.uniform_int(3));
            std::vector<std::pair<std::int64_t, std::int64_t>> placed;
            for (int g = 0; g < glyphs; ++g) {
              for (int attempt = 0; attempt < 20; ++attempt) {
                const auto gy = static_cast<std::int64_t>(
                    rng.uniform_int(static_cast<std::uint64_t>(S - 12)));
                const auto gx = static_cast<std::int64_t>(
                    rng.uniform_int(static_cast<std::uint64_t>(S - 12)));
                bool clear = true;
                for (auto [py, px] : placed) {
                  if (std::abs(py - gy) < 13 && std::abs(px - gx) < 13) {
                    clear = false;
                    break;
                  }
                }
                if (!clear) continue;
                const float amp = static_cast<float>(
                    rng.uniform(0.7, 1.0) / cfg.intensity_scale);
                draw_glyph(chan, complex_cls, gy, gx, amp);
                placed.push_back({gy, gx});
                break;
              }
            }
          }
          break;
        }
        case ChannelKind::noise: {
          for (auto& v : chan.pixels) {
            v = std::clamp(static_cast<float>(0.3 + 0.15 * rng.gaussian()),
                           0.0f, 1.0f);
          }
          break;
        }
      }
      for (std::int64_t p = 0; p < S * S; ++p) {
        stack.pixels[k * S * S + static_cast<std::size_t>(p)] =
            chan.pixels[static_cast<std::size_t>(p)];
      }
      channels.push_back(std::move(chan));
    }
    out.primaries.push_back(std::move(stack));
    out.components.push_back(std::move(channels));
    out.ids.push_back(static_cast<std::int64_t>(i));
  }
  out.tasks["simple"] = std::move(simple_labels);
  out.tasks["complex"] = std::move(complex_labels);
  return out;
}

// ------------------------------------------------------------- normalize

std::string scheme_name(NormalizationScheme scheme) {
  switch (scheme) {
    case NormalizationScheme::none: return "none";
    case NormalizationScheme::normalize_only: return "normalize_only";
    case NormalizationScheme::clip_and_normalize: return "clip_and_normalize";
  }
  return "?";
}

NormalizationScheme parse_scheme(const std::string& name) {
  if (name == "none") return NormalizationScheme::none;
  if (name == "normalize_only") return NormalizationScheme::normalize_only;
  if (name == "clip_and_normalize")
    return NormalizationScheme::clip_and_normalize;
  throw ConfigError(msg("unknown normalization scheme '", name, "'"));
}

ChannelStats compute_channel_stats(const Dataset& train,
                                   NormalizationScheme scheme) {
  check<ConfigError>(!train.primaries.empty(),
                     "compute_channel_stats: empty training split");
  const std::int64_t channels = train.primaries[0].channels;
  ChannelStats stats;
  stats.mean.assign(channels, 0.0f);
  stats.stddev.assign(channels, 1.0f);
  stats.lo.assign(channels, 0.0f);
  stats.hi.assign(channels, 0.0f);
  if (scheme == NormalizationScheme::none) return stats;

  const std::size_t per_image =
      static_cast<std::size_t>(train.primaries[0].height) *
      static_cast<std::size_t>(train.primaries[0].width);
  for (std::int64_t c = 0; c < channels; ++c) {
    std::vector<float> vals;
    vals.reserve(train.size() * per_image);
    for (const auto& img : train.primaries) {
      const float* p = img.pixels.data() + c * per_image;
      vals.insert(vals.end(), p, p + per_image);
    }
    if (scheme == NormalizationScheme::clip_and_normalize) {
      const std::size_t ilo = static_cast<std::size_t>(
          std::floor(0.05 * static_cast<double>(vals.size() - 1)));
      const std::size_t ihi = static_cast<std::size_t>(
          std::floor(0.95 * static_cast<double>(vals.size() - 1)));
      std::nth_element(vals.begin(), vals.begin() + ilo, vals.end());
      const float lo = vals[ilo];
      std::nth_element(vals.begin(), vals.begin() + ihi, vals.end());
      const float hi = vals[ihi];
      stats.lo[c] = lo;
      stats.hi[c] = hi;
      for (auto& v : vals) v = std::clamp(v, lo, hi);
    }
    double mean = 0;
    for (float v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0;
    for (float v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    stats.mean[c] = static_cast<float>(mean);
    if (var < 1e-12) {
      std::cerr << "[normalize] warning: channel " << c
                << " has near-zero variance; eps guard applied\n";
      stats.stddev[c] = 1e-6f;
    } else {
      stats.stddev[c] = static_cast<float>(std::sqrt(var));
    }
  }
  return stats;
}

namespace {

void normalize_image(Image& img, NormalizationScheme scheme,
                     const ChannelStats& stats, std::int64_t stat_offset) {
  const std::size_t per_chan =
      static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width);
  for (std::int64_t c = 0; c < img.channels; ++c) {
    const std::size_t sc = static_cast<std::size_t>(stat_offset + c);
    float* p = img.pixels.data() + c * per_chan;
    for (std::size_t i = 0; i < per_chan; ++i) {
      float v = p[i];
      if (scheme == NormalizationScheme::clip_and_normalize) {
        v = std::clamp(v, stats.lo[sc], stats.hi[sc]);
      }
      p[i] = (v - stats.mean[sc]) / stats.stddev[sc];
    }
  }
}

}  // namespace

void normalize_channels(Dataset& set, NormalizationScheme scheme,
                        const ChannelStats& stats) {
  if (scheme == NormalizationScheme::none) return;
  const std::int64_t channels =
      set.primaries.empty() ? 0 : set.primaries[0].channels;
  check<ConfigError>(static_cast<std::int64_t>(stats.mean.size()) == channels,
                     "normalize_channels: stats cover ", stats.mean.size(),
                     " channels, data has ", channels);
  const bool single_channel_components =
      !set.components.empty() && !set.components[0].empty() &&
      set.components[0][0].channels == 1 &&
      static_cast<std::int64_t>(set.components[0].size()) == channels;
  const bool full_channel_components =
      !set.components.empty() && !set.components[0].empty() &&
      set.components[0][0].channels == channels;
  for (std::size_t i = 0; i < set.primaries.size(); ++i) {
    normalize_image(set.primaries[i], scheme, stats, 0);
    for (std::size_t k = 0; k < set.components[i].size(); ++k) {
      if (single_channel_components) {
        normalize_image(set.components[i][k], scheme, stats,
                        static_cast<std::int64_t>(k));
      } else if (full_channel_components) {
        normalize_image(set.components[i][k], scheme, stats, 0);
      }
    }
  }
}

// --------------------------------------------------------------- augment

std::string regime_name(AugmentRegime regime) {
  switch (regime) {
    case AugmentRegime::identity: return "identity";
    case AugmentRegime::standard: return "standard";
    case AugmentRegime::multiplex: return "multiplex";
  }
  return "?";
}

AugmentRegime parse_regime(const std::string& name) {
  if (name == "identity") return AugmentRegime::identity;
  if (name == "standard") return AugmentRegime::standard;
  if (name == "multiplex") return AugmentRegime::multiplex;
  throw ConfigError(msg("unknown augmentation regime '", name, "'"));
}

namespace {

Image bilinear_resize(const Image& src, std::int64_t out_h, std::int64_t out_w) {
  Image out = Image::zeros(src.channels, out_h, out_w);
  for (std::int64_t c = 0; c < src.channels; ++c) {
    for (std::int64_t y = 0; y < out_h; ++y) {
      const double sy = std::clamp(
          (y + 0.5) * static_cast<double>(src.height) / out_h - 0.5, 0.0,
          static_cast<double>(src.height - 1));
      const std::int64_t y0 = static_cast<std::int64_t>(sy);
      const std::int64_t y1 = std::min(y0 + 1, src.height - 1);
      const double fy = sy - y0;
      for (std::int64_t x = 0; x < out_w; ++x) {
        const double sx = std::clamp(
            (x + 0.5) * static_cast<double>(src.width) / out_w - 0.5, 0.0,
            static_cast<double>(src.width - 1));
        const std::int64_t x0 = static_cast<std::int64_t>(sx);
        const std::int64_t x1 = std::min(x0 + 1, src.width - 1);
        const double fx = sx - x0;
        const double v =
            (1 - fy) * ((1 - fx) * src.at(c, y0, x0) + fx * src.at(c, y0, x1)) +
            fy * ((1 - fx) * src.at(c, y1, x0) + fx * src.at(c, y1, x1));
        out.at(c, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

}  // namespace

Image augment(const Image& img, AugmentRegime regime, Rng& rng, bool clamp) {
  if (regime == AugmentRegime::identity) return img;

  // random resized crop, area scale 0.6..1.0
  const double area = rng.uniform(0.6, 1.0);
  const double side = std::sqrt(area);
  const std::int64_t crop_h = static_cast<std::int64_t>(
      std::lround(static_cast<double>(img.height) * side));
  const std::int64_t crop_w = static_cast<std::int64_t>(
      std::lround(static_cast<double>(img.width) * side));
  check(crop_h >= 1 && crop_w >= 1, "augment: crop collapsed below 1px for ",
        img.height, "x", img.width);
  const auto top = static_cast<std::int64_t>(
      rng.uniform_int(static_cast<std::uint64_t>(img.height - crop_h + 1)));
  const auto left = static_cast<std::int64_t>(
      rng.uniform_int(static_cast<std::uint64_t>(img.width - crop_w + 1)));
  Image crop = Image::zeros(img.channels, crop_h, crop_w);
  for (std::int64_t c = 0; c < img.channels; ++c) {
    for (std::int64_t y = 0; y < crop_h; ++y) {
      for (std::int64_t x = 0; x < crop_w; ++x) {
        crop.at(c, y, x) = img.at(c, top + y, left + x);
      }
    }
  }
  Image out = bilinear_resize(crop, img.height, img.width);

  if (rng.bernoulli(0.5)) {  // horizontal flip
    for (std::int64_t c = 0; c < out.channels; ++c) {
      for (std::int64_t y = 0; y < out.height; ++y) {
        for (std::int64_t x = 0; x < out.width / 2; ++x) {
          std::swap(out.at(c, y, x), out.at(c, y, out.width - 1 - x));
        }
      }
    }
  }

  // brightness/contrast jitter: shared across channels in the standard
  // regime, independent per channel for multiplex stacks
  const bool per_channel = regime == AugmentRegime::multiplex;
  const std::size_t per_chan =
      static_cast<std::size_t>(out.height) * static_cast<std::size_t>(out.width);
  double brightness = rng.uniform(-0.2, 0.2);
  double contrast = rng.uniform(0.8, 1.2);
  for (std::int64_t c = 0; c < out.channels; ++c) {
    if (per_channel && c > 0) {
      brightness = rng.uniform(-0.2, 0.2);
      contrast = rng.uniform(0.8, 1.2);
    }
    float* p = out.pixels.data() + c * per_chan;
    double mean = 0;
    for (std::size_t i = 0; i < per_chan; ++i) mean += p[i];
    mean /= static_cast<double>(per_chan);
    for (std::size_t i = 0; i < per_chan; ++i) {
      double v = (p[i] - mean) * contrast + mean + brightness;
      if (clamp) v = std::clamp(v, 0.0, 1.0);
      p[i] = static_cast<float>(v);
    }
  }
  return out;
}

// ------------------------------------------------------------ containers

namespace {

constexpr char kDatasetMagic[4] = {'S', 'P', 'L', 'D'};
constexpr char kPartsMagic[4] = {'S', 'P', 'L', 'M'};
constexpr std::uint32_t kContainerVersion = 1;

void write_image_dims(std::ostream& os, const Image& img) {
  write_u64(os, static_cast<std::uint64_t>(img.channels));
  write_u64(os, static_cast<std::uint64_t>(img.height));
  write_u64(os, static_cast<std::uint64_t>(img.width));
}

Image read_image_dims(std::istream& is) {
  Image img;
  img.channels = static_cast<std::int64_t>(read_u64(is));
  img.height = static_cast<std::int64_t>(read_u64(is));
  img.width = static_cast<std::int64_t>(read_u64(is));
  return img;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto len = read_u64(is);
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  check<IoError>(static_cast<bool>(is), "dataset container: truncated string");
  return s;
}

void write_pixels(std::ostream& os, const Image& img) {
  ckpt::detail_ckpt::write_scalars(os, img.pixels);
}

void read_pixels(std::istream& is, Image& img) {
  img.pixels = ckpt::detail_ckpt::read_scalars<float>(
      is, static_cast<std::size_t>(img.channels * img.height * img.width));
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& set) {
  check<ConfigError>(!set.primaries.empty(), "save_dataset: empty dataset");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check<IoError>(static_cast<bool>(os), "cannot write '", path, "'");
  os.write(kDatasetMagic, 4);
  write_u32(os, kContainerVersion);
  write_u64(os, set.size());
  write_image_dims(os, set.primaries[0]);
  write_u64(os, set.components_per_sample());
  for (std::size_t k = 0; k < set.components_per_sample(); ++k) {
    write_image_dims(os, set.components[0][k]);
  }
  write_u64(os, set.tasks.size());
  for (const auto& [name, labels] : set.tasks) {
    write_string(os, name);
    for (int l : labels) write_u32(os, static_cast<std::uint32_t>(l));
  }
  for (auto id : set.ids) write_u64(os, static_cast<std::uint64_t>(id));
  for (std::size_t i = 0; i < set.size(); ++i) {
    write_pixels(os, set.primaries[i]);
    for (const auto& comp : set.components[i]) write_pixels(os, comp);
  }
  check<IoError>(static_cast<bool>(os), "write to '", path, "' failed");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check<IoError>(static_cast<bool>(is), "cannot open '", path, "'");
  char magic[4];
  is.read(magic, 4);
  check<IoError>(static_cast<bool>(is) &&
                     std::memcmp(magic, kDatasetMagic, 4) == 0,
                 "'", path, "' is not a SPLD dataset container");
  check<IoError>(read_u32(is) == kContainerVersion,
                 "dataset container: unsupported version");
  Dataset set;
  const auto count = read_u64(is);
  const Image primary_dims = read_image_dims(is);
  const auto n_components = read_u64(is);
  std::vector<Image> comp_dims;
  for (std::uint64_t k = 0; k < n_components; ++k) {
    comp_dims.push_back(read_image_dims(is));
  }
  const auto n_tasks = read_u64(is);
  for (std::uint64_t t = 0; t < n_tasks; ++t) {
    const std::string name = read_string(is);
    std::vector<int> labels(count);
    for (auto& l : labels) l = static_cast<int>(read_u32(is));
    set.tasks[name] = std::move(labels);
  }
  set.ids.resize(count);
  for (auto& id : set.ids) id = static_cast<std::int64_t>(read_u64(is));
  set.primaries.reserve(count);
  set.components.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Image primary = primary_dims;
    read_pixels(is, primary);
    std::vector<Image> comps;
    comps.reserve(n_components);
    for (std::uint64_t k = 0; k < n_components; ++k) {
      Image comp = comp_dims[k];
      read_pixels(is, comp);
      comps.push_back(std::move(comp));
    }
    set.primaries.push_back(std::move(primary));
    set.components.push_back(std::move(comps));
  }
  return set;
}

void save_mnist_cifar_dataset(const std::string& path,
                              const MnistCifarDataset& set) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check<IoError>(static_cast<bool>(os), "cannot write '", path, "'");
  os.write(kPartsMagic, 4);
  write_u32(os, kContainerVersion);
  write_u64(os, set.size());
  for (const auto& rec : set.records) {
    write_u32(os, static_cast<std::uint32_t>(rec.binary_label));
    write_u64(os, static_cast<std::uint64_t>(rec.id));
    write_u64(os, static_cast<std::uint64_t>(rec.mnist_src));
    write_u64(os, static_cast<std::uint64_t>(rec.cifar_src));
    write_pixels(os, rec.mnist_part);
    write_pixels(os, rec.cifar_part);
  }
  check<IoError>(static_cast<bool>(os), "write to '", path, "' failed");
}

MnistCifarDataset load_mnist_cifar_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check<IoError>(static_cast<bool>(is), "cannot open '", path, "'");
  char magic[4];
  is.read(magic, 4);
  check<IoError>(static_cast<bool>(is) && std::memcmp(magic, kPartsMagic, 4) == 0,
                 "'", path, "' is not a SPLM dataset container");
  check<IoError>(read_u32(is) == kContainerVersion,
                 "dataset container: unsupported version");
  MnistCifarDataset set;
  const auto count = read_u64(is);
  set.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    MnistCifarRecord rec;
    rec.binary_label = static_cast<int>(read_u32(is));
    rec.id = static_cast<std::int64_t>(read_u64(is));
    rec.mnist_src = static_cast<std::int64_t>(read_u64(is));
    rec.cifar_src = static_cast<std::int64_t>(read_u64(is));
    rec.mnist_part = Image::zeros(1, 28, 28);
    read_pixels(is, rec.mnist_part);
    rec.cifar_part = Image::zeros(3, 32, 32);
    read_pixels(is, rec.cifar_part);
    set.records.push_back(std::move(rec));
  }
  return set;
}

}  // namespace splicer::data
