// checkpoint.hpp — binary model container.
//
// Layout (all integers and floats little-endian):
//   magic  "SPLC"
//   u32    version (1)
//   u64    config length, followed by the config echo (JSON text)
//   u64    blob count
//   blob:  u64 name length + name bytes
//          u8  scalar width (4 = IEEE-754 binary32, 8 = binary64)
//          u64 rank, u64 dims[rank]
//          payload (dims product * width bytes)
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "splicer/error.hpp"
#include "splicer/tensor.hpp"

namespace splicer::ckpt {

constexpr char kMagic[4] = {'S', 'P', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
struct Blob {
  std::string name;
  Shape shape;
  std::vector<T> values;
};

namespace detail_ckpt {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = (v >> (8 * i)) & 0xFF;
  os.write(reinterpret_cast<const char*>(bytes), 8);
}
inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = (v >> (8 * i)) & 0xFF;
  os.write(reinterpret_cast<const char*>(bytes), 4);
}
inline std::uint64_t read_u64(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  check<IoError>(static_cast<bool>(is), "checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}
inline std::uint32_t read_u32(std::istream& is) {
  unsigned char bytes[4];
  is.read(reinterpret_cast<char*>(bytes), 4);
  check<IoError>(static_cast<bool>(is), "checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

template <typename T>
void write_scalars(std::ostream& os, const std::vector<T>& vals) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::vector<unsigned char> buf(vals.size() * sizeof(T));
  for (std::size_t i = 0; i < vals.size(); ++i) {
    U bits;
    std::memcpy(&bits, &vals[i], sizeof(T));
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      buf[i * sizeof(T) + b] = (bits >> (8 * b)) & 0xFF;
    }
  }
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
}

template <typename T>
std::vector<T> read_scalars(std::istream& is, std::size_t count) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::vector<unsigned char> buf(count * sizeof(T));
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  check<IoError>(static_cast<bool>(is), "checkpoint: truncated payload");
  std::vector<T> vals(count);
  for (std::size_t i = 0; i < count; ++i) {
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      bits |= static_cast<U>(buf[i * sizeof(T) + b]) << (8 * b);
    }
    std::memcpy(&vals[i], &bits, sizeof(T));
  }
  return vals;
}

}  // namespace detail_ckpt

template <typename T>
void save(const std::string& path, const std::string& config_json,
          const std::vector<Blob<T>>& blobs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check<IoError>(static_cast<bool>(os), "checkpoint: cannot open '", path,
                 "' for writing");
  os.write(kMagic, 4);
  detail_ckpt::write_u32(os, kVersion);
  detail_ckpt::write_u64(os, config_json.size());
  os.write(config_json.data(),
           static_cast<std::streamsize>(config_json.size()));
  detail_ckpt::write_u64(os, blobs.size());
  for (const auto& blob : blobs) {
    detail_ckpt::write_u64(os, blob.name.size());
    os.write(blob.name.data(),
             static_cast<std::streamsize>(blob.name.size()));
    os.put(static_cast<char>(sizeof(T)));
    detail_ckpt::write_u64(os, blob.shape.size());
    for (auto d : blob.shape) {
      detail_ckpt::write_u64(os, static_cast<std::uint64_t>(d));
    }
    detail_ckpt::write_scalars(os, blob.values);
  }
  check<IoError>(static_cast<bool>(os), "checkpoint: write to '", path,
                 "' failed");
}

template <typename T>
struct Loaded {
  std::string config_json;
  std::map<std::string, Blob<T>> blobs;
};

template <typename T>
Loaded<T> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check<IoError>(static_cast<bool>(is), "checkpoint: cannot open '", path, "'");
  char magic[4];
  is.read(magic, 4);
  check<IoError>(static_cast<bool>(is) && std::memcmp(magic, kMagic, 4) == 0,
                 "checkpoint: '", path, "' is not a SPLC container");
  const auto version = detail_ckpt::read_u32(is);
  check<IoError>(version == kVersion, "checkpoint: unsupported version ",
                 version);
  Loaded<T> out;
  const auto cfg_len = detail_ckpt::read_u64(is);
  out.config_json.resize(cfg_len);
  is.read(out.config_json.data(), static_cast<std::streamsize>(cfg_len));
  check<IoError>(static_cast<bool>(is), "checkpoint: truncated config echo");
  const auto blob_count = detail_ckpt::read_u64(is);
  for (std::uint64_t i = 0; i < blob_count; ++i) {
    Blob<T> blob;
    const auto name_len = detail_ckpt::read_u64(is);
    blob.name.resize(name_len);
    is.read(blob.name.data(), static_cast<std::streamsize>(name_len));
    const int width = is.get();
    check<IoError>(width == static_cast<int>(sizeof(T)), "checkpoint: blob '",
                   blob.name, "' holds ", width,
                   "-byte scalars, expected ", sizeof(T));
    const auto rank = detail_ckpt::read_u64(is);
    std::uint64_t count = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      const auto dim = detail_ckpt::read_u64(is);
      blob.shape.push_back(static_cast<std::int64_t>(dim));
      count *= dim;
    }
    blob.values = detail_ckpt::read_scalars<T>(is, count);
    out.blobs[blob.name] = std::move(blob);
  }
  return out;
}

}  // namespace splicer::ckpt
