#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "setest/errors.hpp"
#include "setest/io/binary.hpp"
#include "setest/traj/observation.hpp"

// Dataset file layout, all integers little-endian:
//   "SETD" | version u32 | n_traj u32 | D_o u32 | D_p u32
//   per trajectory: task u8 | T u32 | o f32[T*D_o] | o' f32[T*D_p] | phase u8[T]

namespace setest::io {

inline constexpr std::string_view kDatasetMagic = "SETD";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> encode_dataset(const traj::Dataset& data) {
  ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.size32(data.size(), "trajectory count");
  w.u32(traj::kObsDim);
  w.u32(traj::kPrivDim);
  for (const auto& tr : data) {
    if (tr.obs.size() != tr.length() * traj::kObsDim || tr.priv.size() != tr.length() * traj::kPrivDim) {
      throw DimensionError("trajectory arrays do not match its length " + std::to_string(tr.length()));
    }
    w.u8(static_cast<std::uint8_t>(tr.task));
    w.size32(tr.length(), "trajectory length");
    for (double v : tr.obs) w.f32(v);
    for (double v : tr.priv) w.f32(v);
    for (auto p : tr.phase) w.u8(static_cast<std::uint8_t>(p));
  }
  return w.take();
}

inline traj::Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::string magic = r.bytes(4, "magic");
  if (magic != kDatasetMagic) throw FormatError("not a dataset file (magic '" + magic + "')");
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  const std::uint32_t n = r.u32("trajectory count");
  const std::uint32_t d_obs = r.u32("D_o");
  const std::uint32_t d_priv = r.u32("D_p");
  if (d_obs != traj::kObsDim || d_priv != traj::kPrivDim) {
    throw DimensionError("dataset dims (" + std::to_string(d_obs) + ", " + std::to_string(d_priv) +
                         ") differ from the observation spec (" + std::to_string(traj::kObsDim) + ", " +
                         std::to_string(traj::kPrivDim) + ")");
  }
  traj::Dataset out;
  out.reserve(std::min<std::size_t>(n, r.remaining() / 5 + 1));
  for (std::uint32_t i = 0; i < n; ++i) {
    traj::Trajectory tr;
    tr.task = traj::task_from_id(r.u8("task id"));
    const std::uint32_t T = r.u32("trajectory length");
    // check the whole payload up front so the error names its full extent
    r.need(static_cast<std::size_t>(T) * ((d_obs + d_priv) * 4 + 1), "trajectory " + std::to_string(i) + " payload");
    tr.resize(T);
    r.f32_array(tr.obs, "observations");
    r.f32_array(tr.priv, "privileged observations");
    for (auto& p : tr.phase) {
      const std::uint8_t v = r.u8("phase");
      if (v > 2) throw FormatError("phase label " + std::to_string(v) + " at offset " + std::to_string(r.offset() - 1));
      p = static_cast<traj::Phase>(v);
    }
    out.push_back(std::move(tr));
  }
  r.expect_end("dataset file");
  return out;
}

/// The value a trajectory takes after a write/read cycle: float32-rounded
/// arrays and no seed (the seed is not part of the file).
inline traj::Dataset as_stored(traj::Dataset data) {
  for (auto& tr : data) {
    tr.seed = 0;
    for (double& v : tr.obs) v = static_cast<double>(static_cast<float>(v));
    for (double& v : tr.priv) v = static_cast<double>(static_cast<float>(v));
  }
  return data;
}

inline void write_dataset(const std::string& path, const traj::Dataset& data) {
  write_file(path, encode_dataset(data));
}

inline traj::Dataset read_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

}  // namespace setest::io
