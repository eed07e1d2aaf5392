#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "langsamp/adamw.hpp"
#include "langsamp/model.hpp"
#include "langsamp/types.hpp"

namespace langsamp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

// Binary container: 8-byte magic "LSMP0001", a uint64 little-endian header
// length, a UTF-8 JSON header listing tensor names/dtypes/shapes/offsets and
// per-tensor CRC32 checksums, then the raw tensor payloads back to back.
// Offsets are relative to the first payload byte. Writing is canonical, so
// save -> load -> save is byte-identical.
inline constexpr char kCheckpointMagic[8] = {'L', 'S', 'M', 'P', '0', '0', '0', '1'};

struct RawTensor {
  std::string name;
  std::string dtype;  // "f32" or "f64"
  long rows = 0;
  long cols = 0;
  std::string bytes;  // packed row-major little-endian payload
};

struct CheckpointFile {
  nlohmann::json config;
  nlohmann::json meta;
  std::vector<RawTensor> tensors;

  const RawTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

std::uint32_t crc32(std::span<const unsigned char> data);

void write_checkpoint(const CheckpointFile& file, const std::filesystem::path& path);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

template <typename Scalar>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<Scalar, float>)
    return "f32";
  else {
    static_assert(std::is_same_v<Scalar, double>, "unsupported checkpoint scalar");
    return "f64";
  }
}

template <typename Scalar>
RawTensor to_raw(std::string name, const Mat<Scalar>& m) {
  RawTensor t;
  t.name = std::move(name);
  t.dtype = dtype_name<Scalar>();
  t.rows = m.rows();
  t.cols = m.cols();
  t.bytes.resize(sizeof(Scalar) * static_cast<std::size_t>(m.size()));
  std::memcpy(t.bytes.data(), m.data(), t.bytes.size());
  return t;
}

template <typename Scalar>
Mat<Scalar> from_raw(const RawTensor& t) {
  if (t.dtype != dtype_name<Scalar>())
    throw IoError("tensor " + t.name + " has dtype " + t.dtype + ", expected " +
                  dtype_name<Scalar>());
  const std::size_t expected = sizeof(Scalar) * static_cast<std::size_t>(t.rows) *
                               static_cast<std::size_t>(t.cols);
  if (t.bytes.size() != expected)
    throw IoError("tensor " + t.name + " payload size mismatch");
  Mat<Scalar> m(t.rows, t.cols);
  std::memcpy(m.data(), t.bytes.data(), expected);
  return m;
}

// Model-level view of a container: parameters in canonical layout order plus
// optional optimizer moments. Missing language/script tables are tolerated
// (a stripped checkpoint still loads; only the MLM head needs the tables).
struct ModelCheckpoint {
  ModelParams<float> params;
  nlohmann::json meta;
  bool has_optimizer = false;
  std::vector<Matf> optim_m;
  std::vector<Matf> optim_v;
  long optim_step_count = 0;
};

CheckpointFile make_model_checkpoint(const ModelParams<float>& params, nlohmann::json meta,
                                     const AdamWState<float>* optim = nullptr);
ModelCheckpoint load_model_checkpoint(const CheckpointFile& file);

inline ModelCheckpoint load_model_checkpoint(const std::filesystem::path& path) {
  return load_model_checkpoint(read_checkpoint(path));
}

}  // namespace langsamp
