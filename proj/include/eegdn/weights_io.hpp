#pragma once

// Weights file ("E2CW"), little-endian:
//   magic "E2CW" | version u16 | layer count u16
//   per layer: index u16 | weight tensor | bias tensor
//   tensor: rank u8 | dims u32 x rank | float32 x numel
// Values are always stored as float32.

#include <cstdint>
#include <limits>
#include <string>

#include "eegdn/binary_io.hpp"
#include "eegdn/model.hpp"

namespace eegdn {

inline constexpr std::string_view kWeightsMagic = "E2CW";
inline constexpr std::uint16_t kWeightsVersion = 1;

namespace detail {

template <class T>
void write_tensor(io::ByteWriter& w, const Tensor<T>& t) {
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (auto v : t.data()) w.f32(static_cast<float>(v));
}

template <class T>
Tensor<T> read_tensor(io::ByteReader& r) {
  const auto rank = r.u8();
  if (rank < 1 || rank > 4) throw FormatError(r.context() + ": invalid tensor rank " + std::to_string(rank));
  Shape s(rank);
  for (auto& d : s) {
    d = r.u32();
    if (d == 0) throw FormatError(r.context() + ": zero tensor dimension");
  }
  const auto n = shape_numel(s);
  if (n * 4 > r.remaining()) {
    throw FormatError(r.context() + ": truncated data (tensor " + shape_str(s) + " needs " + std::to_string(n * 4) +
                      " bytes, " + std::to_string(r.remaining()) + " left)");
  }
  std::vector<T> data(n);
  for (auto& v : data) v = static_cast<T>(r.f32());
  return Tensor<T>(std::move(s), std::move(data));
}

}  // namespace detail

template <class T>
std::string encode_weights(const ParamStore<T>& store) {
  if (store.size() > std::numeric_limits<std::uint16_t>::max()) throw InputError("too many layers for E2CW");
  io::ByteWriter w;
  w.bytes(kWeightsMagic);
  w.u16(kWeightsVersion);
  w.u16(static_cast<std::uint16_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    w.u16(static_cast<std::uint16_t>(i));
    detail::write_tensor(w, store.entries[i].weights);
    detail::write_tensor(w, store.entries[i].bias);
  }
  return w.buffer();
}

template <class T>
ParamStore<T> decode_weights(io::ByteReader& r) {
  if (r.bytes(4) != kWeightsMagic) throw FormatError(r.context() + ": bad magic, not an E2CW weights file");
  const auto version = r.u16();
  if (version != kWeightsVersion) throw FormatError(r.context() + ": unsupported weights version " + std::to_string(version));
  const auto count = r.u16();
  ParamStore<T> store;
  store.entries.resize(count);
  std::vector<bool> seen(count, false);
  for (std::size_t i = 0; i < count; ++i) {
    const auto idx = r.u16();
    if (idx >= count || seen[idx]) throw FormatError(r.context() + ": invalid or duplicate layer index " + std::to_string(idx));
    seen[idx] = true;
    store.entries[idx].weights = detail::read_tensor<T>(r);
    store.entries[idx].bias = detail::read_tensor<T>(r);
  }
  if (!r.at_end()) throw FormatError(r.context() + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return store;
}

template <class T>
void save_weights(const Model<T>& model, const std::string& path) {
  io::ByteWriter w;
  w.bytes(encode_weights(model.params()));
  w.write_file(path);
}

template <class T>
ParamStore<T> read_weights(const std::string& path) {
  auto r = io::ByteReader::from_file(path);
  return decode_weights<T>(r);
}

/// Loads weights for `spec`; a store that does not match the spec's layers
/// raises ShapeError listing expected vs found shapes.
template <class T = float>
Model<T> load_weights(const ModelSpec& spec, const std::string& path) {
  return Model<T>(spec, read_weights<T>(path));
}

}  // namespace eegdn
