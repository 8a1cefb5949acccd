#pragma once

// The guiding key-value database: feature-map patching, farthest-point
// sampling for key deduplication, exact nearest-key queries and binary
// persistence.
//
// All distances are squared Euclidean; ties everywhere break toward the
// lowest index, so every operation is deterministic.

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eeroute/serial.hpp"

namespace eeroute {

/// Dense row-major feature tensor of shape channels x height x width.
struct FeatureMap {
  int channels = 1;
  int height = 1;
  int width = 1;
  std::vector<float> data;

  float at(int c, int y, int x) const { return data[(std::size_t(c) * height + y) * width + x]; }
  float& at(int c, int y, int x) { return data[(std::size_t(c) * height + y) * width + x]; }

  bool operator==(const FeatureMap&) const = default;
};

inline void validate(const FeatureMap& f) {
  if (f.channels < 1 || f.height < 1 || f.width < 1)
    throw std::invalid_argument("FeatureMap dims must be >= 1");
  if (f.data.size() != std::size_t(f.channels) * f.height * f.width)
    throw std::invalid_argument("FeatureMap data length does not match dims");
}

struct PatchGrid {
  int rows = 1;
  int cols = 1;
};

/// Cuts f into rows x cols non-overlapping patches, row-major order.
inline std::vector<FeatureMap> cut_into_patches(const FeatureMap& f, const PatchGrid& g) {
  validate(f);
  if (g.rows < 1 || g.cols < 1) throw std::invalid_argument("grid dims must be >= 1");
  if (f.height % g.rows != 0 || f.width % g.cols != 0)
    throw std::invalid_argument("grid does not divide the feature map exactly");
  const int ph = f.height / g.rows, pw = f.width / g.cols;
  std::vector<FeatureMap> patches;
  patches.reserve(std::size_t(g.rows) * g.cols);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      FeatureMap p{f.channels, ph, pw, std::vector<float>(std::size_t(f.channels) * ph * pw)};
      for (int ch = 0; ch < f.channels; ++ch)
        for (int y = 0; y < ph; ++y)
          for (int x = 0; x < pw; ++x) p.at(ch, y, x) = f.at(ch, r * ph + y, c * pw + x);
      patches.push_back(std::move(p));
    }
  return patches;
}

/// Inverse of cut_into_patches: glue(cut(f, g), g) == f bit-exactly.
inline FeatureMap glue_patches(const std::vector<FeatureMap>& patches, const PatchGrid& g) {
  if (g.rows < 1 || g.cols < 1) throw std::invalid_argument("grid dims must be >= 1");
  if (patches.size() != std::size_t(g.rows) * g.cols)
    throw std::invalid_argument("patch count does not match grid");
  const FeatureMap& first = patches.front();
  for (const auto& p : patches) {
    validate(p);
    if (p.channels != first.channels || p.height != first.height || p.width != first.width)
      throw std::invalid_argument("patches must share one shape");
  }
  FeatureMap f{first.channels, first.height * g.rows, first.width * g.cols, {}};
  f.data.resize(std::size_t(f.channels) * f.height * f.width);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const FeatureMap& p = patches[std::size_t(r) * g.cols + c];
      for (int ch = 0; ch < p.channels; ++ch)
        for (int y = 0; y < p.height; ++y)
          for (int x = 0; x < p.width; ++x)
            f.at(ch, r * p.height + y, c * p.width + x) = p.at(ch, y, x);
    }
  return f;
}

namespace detail {
inline double sq_dist(std::span<const float> a, std::span<const float> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double diff = double(a[i]) - double(b[i]);
    d += diff * diff;
  }
  return d;
}
}  // namespace detail

/// Greedy farthest-point sampling. Starts from start_index; each step picks
/// the point maximizing the minimum distance to the selected set (lowest
/// index on ties). Returns indices in selection order.
inline std::vector<std::size_t> fps_sample(const std::vector<std::vector<float>>& keys,
                                           std::size_t k, std::size_t start_index = 0) {
  if (k > keys.size()) throw std::invalid_argument("fps_sample: k exceeds population");
  if (start_index >= keys.size()) throw std::invalid_argument("fps_sample: bad start_index");
  std::vector<std::size_t> picked;
  if (k == 0) return picked;
  picked.reserve(k);
  picked.push_back(start_index);
  std::vector<double> min_dist(keys.size(), std::numeric_limits<double>::infinity());
  while (picked.size() < k) {
    const auto& last = keys[picked.back()];
    std::size_t best = keys.size();
    double best_dist = -1.0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      min_dist[i] = std::min(min_dist[i], detail::sq_dist(keys[i], last));
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    picked.push_back(best);
  }
  return picked;
}

inline constexpr std::uint16_t kNoClass = 0xFFFF;

struct DbEntry {
  std::vector<float> key;
  FeatureMap value;
  std::optional<std::uint16_t> class_label;

  bool operator==(const DbEntry&) const = default;
};

/// Immutable after construction/load; safe for concurrent readers.
struct PatchDatabase {
  std::vector<DbEntry> entries;
  int key_dim = 0;
  std::map<std::uint16_t, std::vector<std::size_t>> class_index;

  bool operator==(const PatchDatabase&) const = default;
};

namespace detail {
inline void check_schema(const std::vector<DbEntry>& entries) {
  if (entries.empty()) return;
  const std::size_t dim = entries.front().key.size();
  const bool has_class = entries.front().class_label.has_value();
  for (const auto& e : entries) {
    if (e.key.size() != dim)
      throw std::invalid_argument("inconsistent key dimensions across entries");
    if (e.class_label.has_value() != has_class)
      throw std::invalid_argument("entries must uniformly carry or omit class labels");
    validate(e.value);
  }
}

inline std::map<std::uint16_t, std::vector<std::size_t>> build_class_index(
    const std::vector<DbEntry>& entries) {
  std::map<std::uint16_t, std::vector<std::size_t>> idx;
  for (std::size_t i = 0; i < entries.size(); ++i)
    idx[entries[i].class_label.value_or(kNoClass)].push_back(i);
  return idx;
}
}  // namespace detail

/// Builds the database, deduplicating each class down to per_class_cap
/// entries with FPS when the class population exceeds the cap. Retained
/// entries keep their original relative order.
inline PatchDatabase build_database(const std::vector<DbEntry>& entries,
                                    std::size_t per_class_cap, std::size_t start_index = 0) {
  if (per_class_cap < 1) throw std::invalid_argument("per_class_cap must be >= 1");
  detail::check_schema(entries);
  PatchDatabase db;
  db.key_dim = entries.empty() ? 0 : static_cast<int>(entries.front().key.size());

  // Group original indices by class, preserving order.
  std::map<std::uint16_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < entries.size(); ++i)
    groups[entries[i].class_label.value_or(kNoClass)].push_back(i);

  std::vector<std::size_t> keep;
  for (const auto& [label, members] : groups) {
    if (members.size() <= per_class_cap) {
      keep.insert(keep.end(), members.begin(), members.end());
      continue;
    }
    std::vector<std::vector<float>> keys;
    keys.reserve(members.size());
    for (std::size_t i : members) keys.push_back(entries[i].key);
    std::size_t start = start_index < members.size() ? start_index : 0;
    auto sel = fps_sample(keys, per_class_cap, start);
    std::sort(sel.begin(), sel.end());
    for (std::size_t s : sel) keep.push_back(members[s]);
  }
  std::sort(keep.begin(), keep.end());
  db.entries.reserve(keep.size());
  for (std::size_t i : keep) db.entries.push_back(entries[i]);
  db.class_index = detail::build_class_index(db.entries);
  return db;
}

/// Exact nearest key by squared Euclidean distance, optionally restricted to
/// one class partition. Returns the entry index.
inline std::size_t query_nearest_index(const PatchDatabase& db, std::span<const float> key,
                                       std::optional<std::uint16_t> class_label = std::nullopt) {
  if (static_cast<int>(key.size()) != db.key_dim)
    throw std::invalid_argument("query key dimension does not match database");
  const std::vector<std::size_t>* candidates = nullptr;
  std::vector<std::size_t> all;
  if (class_label) {
    auto it = db.class_index.find(*class_label);
    if (it == db.class_index.end() || it->second.empty())
      throw std::out_of_range("no entries for class " + std::to_string(*class_label));
    candidates = &it->second;
  } else {
    if (db.entries.empty()) throw std::out_of_range("query against empty database");
    all.resize(db.entries.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    candidates = &all;
  }
  std::size_t best = (*candidates)[0];
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i : *candidates) {
    double d = detail::sq_dist(db.entries[i].key, key);
    if (d < best_dist) {  // strict: ties keep the lowest index
      best_dist = d;
      best = i;
    }
  }
  return best;
}

inline const DbEntry& query_nearest(const PatchDatabase& db, std::span<const float> key,
                                    std::optional<std::uint16_t> class_label = std::nullopt) {
  return db.entries[query_nearest_index(db, key, class_label)];
}

/// Head-avatar style key: 3 rotation angles plus an expression vector, fused
/// by angle_weight * ||d_angles||^2 + ||d_expression||^2.
struct PoseExprKey {
  std::array<float, 3> angles{};
  std::vector<float> expression;
  double angle_weight = 1.0;
};

inline std::size_t query_pose_index(const PatchDatabase& db, const PoseExprKey& key) {
  if (key.angle_weight < 0.0) throw std::invalid_argument("angle_weight must be >= 0");
  if (db.key_dim != static_cast<int>(3 + key.expression.size()))
    throw std::invalid_argument("database key layout does not match pose-expression key");
  if (db.entries.empty()) throw std::out_of_range("query against empty database");
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < db.entries.size(); ++i) {
    const auto& k = db.entries[i].key;  // layout: angles[3] then expression
    double da = 0.0;
    for (int a = 0; a < 3; ++a) {
      double diff = double(k[a]) - double(key.angles[a]);
      da += diff * diff;
    }
    double de = detail::sq_dist(std::span(k).subspan(3), key.expression);
    double d = key.angle_weight * da + de;
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

inline const DbEntry& query_pose(const PatchDatabase& db, const PoseExprKey& key) {
  return db.entries[query_pose_index(db, key)];
}

// ---------------------------------------------------------------------------
// Persistence. Layout (little-endian):
//   magic "FNCDB1"
//   key_dim: u32, entry_count: u64, has_class: u8
//   per entry: key f32 x key_dim | value shape u32 x 3 | value f32s
//              | class label u16 (only when has_class)
//   crc32: u32 over everything after the magic
// ---------------------------------------------------------------------------

inline constexpr std::string_view kDbMagic = "FNCDB1";

inline std::vector<std::uint8_t> save(const PatchDatabase& db) {
  ByteWriter payload;
  const bool has_class =
      !db.entries.empty() && db.entries.front().class_label.has_value();
  payload.put_u32(static_cast<std::uint32_t>(db.key_dim));
  payload.put_u64(db.entries.size());
  payload.put_u8(has_class ? 1 : 0);
  for (const auto& e : db.entries) {
    for (float v : e.key) payload.put_f32(v);
    payload.put_u32(static_cast<std::uint32_t>(e.value.channels));
    payload.put_u32(static_cast<std::uint32_t>(e.value.height));
    payload.put_u32(static_cast<std::uint32_t>(e.value.width));
    for (float v : e.value.data) payload.put_f32(v);
    if (has_class) payload.put_u16(*e.class_label);
  }
  ByteWriter out;
  out.put_magic(kDbMagic);
  out.put_bytes(payload.bytes());
  out.put_u32(crc32(payload.bytes()));
  return out.take();
}

inline PatchDatabase load_database(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kDbMagic);
  if (bytes.size() < kDbMagic.size() + 4)
    throw format_error("stream too short for checksum", bytes.size());
  const std::size_t payload_size = bytes.size() - kDbMagic.size() - 4;
  auto payload = bytes.subspan(kDbMagic.size(), payload_size);
  const std::uint32_t stored_crc = [&] {
    ByteReader tail(bytes.subspan(bytes.size() - 4));
    return tail.get_u32();
  }();
  if (crc32(payload) != stored_crc)
    throw format_error("checksum mismatch", bytes.size() - 4);

  PatchDatabase db;
  db.key_dim = static_cast<int>(r.get_u32());
  const std::uint64_t count = r.get_u64();
  const bool has_class = r.get_u8() != 0;
  // Guard against absurd counts from corrupted length fields before the
  // truncation check would fire allocation-first.
  const std::size_t min_entry_bytes = std::size_t(db.key_dim) * 4 + 12 + 4;
  if (count > 0 && payload_size / count < min_entry_bytes && count * min_entry_bytes > payload_size)
    throw format_error("entry count inconsistent with stream length", r.pos());
  db.entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    DbEntry e;
    e.key.resize(db.key_dim);
    for (int d = 0; d < db.key_dim; ++d) e.key[d] = r.get_f32();
    const int c = static_cast<int>(r.get_u32());
    const int h = static_cast<int>(r.get_u32());
    const int w = static_cast<int>(r.get_u32());
    if (c < 1 || h < 1 || w < 1) throw format_error("bad value shape", r.pos());
    const std::size_t n = std::size_t(c) * h * w;
    if (r.remaining() < n * 4) throw format_error("truncated value data", r.pos());
    e.value = FeatureMap{c, h, w, std::vector<float>(n)};
    for (std::size_t j = 0; j < n; ++j) e.value.data[j] = r.get_f32();
    if (has_class) e.class_label = r.get_u16();
    db.entries.push_back(std::move(e));
  }
  if (r.pos() != kDbMagic.size() + payload_size)
    throw format_error("trailing bytes after last entry", r.pos());
  db.class_index = detail::build_class_index(db.entries);
  return db;
}

}  // namespace eeroute
