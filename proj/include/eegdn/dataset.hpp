#pragma once

// Segment pairs and their binary container ("E2CD"), little-endian:
//   magic "E2CD" | version u16 | pair count u32
//   per pair: origin-id length u16 + bytes | start index u32 | norm_min f32 | norm_max f32 |
//             degenerate u8 | 800 x f32 contaminated | 800 x f32 clean

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "eegdn/binary_io.hpp"
#include "eegdn/error.hpp"

namespace eegdn {

inline constexpr std::size_t kSegmentLength = 800;
inline constexpr std::size_t kSegmentHop = 400;
inline constexpr double kTargetFs = 200.0;

/// An aligned (contaminated, clean) window normalized by the contaminated window's range.
struct SegmentPair {
  std::vector<float> contaminated = std::vector<float>(kSegmentLength);
  std::vector<float> clean = std::vector<float>(kSegmentLength);
  float norm_min = 0.0f;
  float norm_max = 1.0f;
  bool degenerate = false;
  std::string origin_id;
  std::uint32_t start = 0;

  friend bool operator==(const SegmentPair&, const SegmentPair&) = default;
};

inline constexpr std::string_view kDatasetMagic = "E2CD";
inline constexpr std::uint16_t kDatasetVersion = 1;

inline std::string encode_dataset(const std::vector<SegmentPair>& pairs) {
  io::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(pairs.size()));
  for (const auto& p : pairs) {
    if (p.contaminated.size() != kSegmentLength || p.clean.size() != kSegmentLength) {
      throw InputError("segment pair from '" + p.origin_id + "' is not " + std::to_string(kSegmentLength) + " samples");
    }
    if (p.origin_id.size() > std::numeric_limits<std::uint16_t>::max()) throw InputError("origin id too long");
    w.u16(static_cast<std::uint16_t>(p.origin_id.size()));
    w.bytes(p.origin_id);
    w.u32(p.start);
    w.f32(p.norm_min);
    w.f32(p.norm_max);
    w.u8(p.degenerate ? 1 : 0);
    for (float v : p.contaminated) w.f32(v);
    for (float v : p.clean) w.f32(v);
  }
  return w.buffer();
}

inline std::vector<SegmentPair> decode_dataset(io::ByteReader& r) {
  if (r.bytes(4) != kDatasetMagic) throw FormatError(r.context() + ": bad magic, not an E2CD dataset");
  const auto version = r.u16();
  if (version != kDatasetVersion) throw FormatError(r.context() + ": unsupported dataset version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<SegmentPair> out;
  out.reserve(std::min<std::size_t>(count, r.remaining() / (2 * 4 * kSegmentLength) + 1));
  for (std::uint32_t i = 0; i < count; ++i) {
    SegmentPair p;
    p.origin_id = r.bytes(r.u16());
    p.start = r.u32();
    p.norm_min = r.f32();
    p.norm_max = r.f32();
    const auto flag = r.u8();
    if (flag > 1) throw FormatError(r.context() + ": invalid degenerate flag in pair " + std::to_string(i));
    p.degenerate = flag == 1;
    for (auto& v : p.contaminated) v = r.f32();
    for (auto& v : p.clean) v = r.f32();
    out.push_back(std::move(p));
  }
  if (!r.at_end()) throw FormatError(r.context() + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

inline void save_dataset(const std::vector<SegmentPair>& pairs, const std::string& path) {
  io::ByteWriter w;
  w.bytes(encode_dataset(pairs));
  w.write_file(path);
}

inline std::vector<SegmentPair> load_dataset(const std::string& path) {
  auto r = io::ByteReader::from_file(path);
  return decode_dataset(r);
}

}  // namespace eegdn
