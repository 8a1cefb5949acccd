#pragma once

// Synthetic stand-in for the backbone + branches: generates inputs with a
// controllable per-input difficulty and per-exit true quality scores (lower
// is better), so the predictor and router can be trained and validated at
// desk scale.
//
// Difficulty d = softplus(w . x). Score at exit e =
//   link_scale * softplus(d - capacity_e) + |noise|,
// strictly positive, non-increasing in capacity when noise_sd = 0. The noise
// stream of each (input, exit) pair is derived from the master seed by
// hashing indices, so adding exits never perturbs earlier streams.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <string>
#include <vector>

#include "eeroute/rng.hpp"
#include "eeroute/serial.hpp"

namespace eeroute {

struct OracleConfig {
  int input_dim = 16;
  std::vector<double> exit_capacities;    // strictly ascending, one per branch
  std::vector<double> difficulty_weights; // length input_dim
  double noise_sd = 0.0;
  double link_scale = 1.0;
  std::uint64_t seed = 0;
};

inline void validate(const OracleConfig& c) {
  if (c.input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (c.exit_capacities.empty()) throw std::invalid_argument("need at least one exit capacity");
  for (std::size_t i = 0; i + 1 < c.exit_capacities.size(); ++i)
    if (!(c.exit_capacities[i] < c.exit_capacities[i + 1]))
      throw std::invalid_argument("exit capacities must be strictly ascending");
  if (static_cast<int>(c.difficulty_weights.size()) != c.input_dim)
    throw std::invalid_argument("difficulty_weights length must equal input_dim");
  if (c.noise_sd < 0.0) throw std::invalid_argument("noise_sd must be >= 0");
  if (!(c.link_scale > 0.0)) throw std::invalid_argument("link_scale must be > 0");
}

inline double softplus(double x) {
  // Stable for large |x|.
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

/// One generated input: features, its index (seeding handle for the per-exit
/// noise streams) and the designated difficulty attribute (coordinate 0).
struct SimInput {
  std::vector<double> features;
  std::uint64_t index = 0;
  double attribute = 0.0;
};

class QualityOracle {
public:
  explicit QualityOracle(OracleConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }

  const OracleConfig& config() const { return cfg_; }
  int exit_count() const { return static_cast<int>(cfg_.exit_capacities.size()); }

  /// Draws input `index` from a seeded standard normal. The same (seed,
  /// index) always yields the same vector.
  SimInput sample_input(std::uint64_t index) const {
    Rng rng(derive_seed(cfg_.seed, 0x696e /* "in" */, index));
    SimInput s;
    s.index = index;
    s.features.resize(cfg_.input_dim);
    for (auto& v : s.features) v = rng.next_normal();
    s.attribute = s.features[0];
    return s;
  }

  std::vector<SimInput> sample_inputs(std::uint64_t n) const {
    if (n < 1) throw std::invalid_argument("sample_inputs: n must be >= 1");
    std::vector<SimInput> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(sample_input(i));
    return out;
  }

  double difficulty(std::span<const double> features) const {
    if (static_cast<int>(features.size()) != cfg_.input_dim)
      throw std::invalid_argument("feature dimension mismatch");
    double dot = 0.0;
    for (int i = 0; i < cfg_.input_dim; ++i) dot += cfg_.difficulty_weights[i] * features[i];
    return softplus(dot);
  }

  /// True per-exit quality scores for an input. The index selects the noise
  /// streams; pass the input's own index for reproducible labels.
  std::vector<double> true_scores(std::span<const double> features, std::uint64_t index) const {
    const double d = difficulty(features);
    std::vector<double> scores(exit_count());
    for (int e = 0; e < exit_count(); ++e) {
      double s = cfg_.link_scale * softplus(d - cfg_.exit_capacities[e]);
      if (cfg_.noise_sd > 0.0) {
        Rng noise(derive_seed(cfg_.seed, 0x6e7a ^ (index + 1), std::uint64_t(e) + 1));
        s += std::abs(cfg_.noise_sd * noise.next_normal());
      }
      scores[e] = s;
    }
    return scores;
  }

  std::vector<double> true_scores(const SimInput& x) const {
    return true_scores(x.features, x.index);
  }

private:
  OracleConfig cfg_;
};

struct Dataset {
  std::vector<std::pair<std::vector<double>, std::vector<double>>> samples;  // input, scores
  std::vector<double> attributes;  // per-sample difficulty attribute
  std::size_t train_count = 0;     // samples[0..train_count) train, rest validation
  int input_dim = 0;
  int exit_count = 0;

  auto train_view() const {
    return std::span(samples).first(train_count);
  }
  auto val_view() const {
    return std::span(samples).subspan(train_count);
  }
};

/// Crosses n_conditions condition vectors with n_noise fixed noise vectors
/// (concatenated; the noise part is the trailing half of each input), then
/// splits 90/10 by a seeded shuffle.
inline Dataset make_dataset(const QualityOracle& o, std::uint64_t n_conditions,
                            std::uint64_t n_noise_vectors) {
  if (n_conditions < 1 || n_noise_vectors < 1)
    throw std::invalid_argument("make_dataset: counts must be >= 1");
  const auto& cfg = o.config();
  const int noise_dim = cfg.input_dim / 2;
  const int cond_dim = cfg.input_dim - noise_dim;

  std::vector<std::vector<double>> conditions(n_conditions);
  for (std::uint64_t c = 0; c < n_conditions; ++c) {
    Rng rng(derive_seed(cfg.seed, 0x636e64 /* "cnd" */, c));
    conditions[c].resize(cond_dim);
    for (auto& v : conditions[c]) v = rng.next_normal();
  }
  std::vector<std::vector<double>> noises(n_noise_vectors);
  for (std::uint64_t z = 0; z < n_noise_vectors; ++z) {
    Rng rng(derive_seed(cfg.seed, 0x6e7376 /* "nsv" */, z));
    noises[z].resize(noise_dim);
    for (auto& v : noises[z]) v = rng.next_normal();
  }

  Dataset ds;
  ds.input_dim = cfg.input_dim;
  ds.exit_count = o.exit_count();
  const std::uint64_t total = n_conditions * n_noise_vectors;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> raw;
  std::vector<double> attrs;
  raw.reserve(total);
  for (std::uint64_t c = 0; c < n_conditions; ++c)
    for (std::uint64_t z = 0; z < n_noise_vectors; ++z) {
      std::vector<double> x = conditions[c];
      x.insert(x.end(), noises[z].begin(), noises[z].end());
      const std::uint64_t index = c * n_noise_vectors + z;
      auto scores = o.true_scores(x, index);
      attrs.push_back(x[0]);
      raw.emplace_back(std::move(x), std::move(scores));
    }

  Rng split_rng(derive_seed(cfg.seed, 0x73706c /* "spl" */));
  auto order = split_rng.permutation(raw.size());
  ds.samples.reserve(total);
  for (std::size_t i : order) {
    ds.samples.push_back(std::move(raw[i]));
    ds.attributes.push_back(attrs[i]);
  }
  ds.train_count = total == 1 ? 1 : (total * 9) / 10;
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset file: magic "FNCDS1" | sample_count u64 | train_count u64 |
// input_dim u32 | exit_count u32 | f32 rows (input || scores || attribute) |
// crc32 over everything after the magic.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kDatasetMagic = "FNCDS1";

inline std::vector<std::uint8_t> save(const Dataset& ds) {
  ByteWriter payload;
  payload.put_u64(ds.samples.size());
  payload.put_u64(ds.train_count);
  payload.put_u32(static_cast<std::uint32_t>(ds.input_dim));
  payload.put_u32(static_cast<std::uint32_t>(ds.exit_count));
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    for (double v : ds.samples[i].first) payload.put_f32(static_cast<float>(v));
    for (double v : ds.samples[i].second) payload.put_f32(static_cast<float>(v));
    payload.put_f32(static_cast<float>(ds.attributes[i]));
  }
  ByteWriter out;
  out.put_magic(kDatasetMagic);
  out.put_bytes(payload.bytes());
  out.put_u32(crc32(payload.bytes()));
  return out.take();
}

inline Dataset load_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kDatasetMagic);
  if (bytes.size() < kDatasetMagic.size() + 4)
    throw format_error("stream too short for checksum", bytes.size());
  auto payload = bytes.subspan(kDatasetMagic.size(), bytes.size() - kDatasetMagic.size() - 4);
  ByteReader tail(bytes.subspan(bytes.size() - 4));
  if (crc32(payload) != tail.get_u32())
    throw format_error("checksum mismatch", bytes.size() - 4);

  Dataset ds;
  const std::uint64_t count = r.get_u64();
  ds.train_count = r.get_u64();
  ds.input_dim = static_cast<int>(r.get_u32());
  ds.exit_count = static_cast<int>(r.get_u32());
  if (ds.input_dim < 1 || ds.exit_count < 1) throw format_error("bad dataset dims", r.pos());
  if (ds.train_count > count) throw format_error("train_count exceeds sample count", r.pos());
  const std::size_t row_floats = std::size_t(ds.input_dim) + ds.exit_count + 1;
  if (r.remaining() != count * row_floats * 4 + 4)
    throw format_error("stream length inconsistent with header", r.pos());
  ds.samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::vector<double> x(ds.input_dim), s(ds.exit_count);
    for (auto& v : x) v = r.get_f32();
    for (auto& v : s) v = r.get_f32();
    ds.attributes.push_back(r.get_f32());
    ds.samples.emplace_back(std::move(x), std::move(s));
  }
  return ds;
}

}  // namespace eeroute
