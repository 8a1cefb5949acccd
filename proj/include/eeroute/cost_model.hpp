#pragma once

// Branch cost modeling: backbone/branch module graphs, channel scaling under
// a minimum-channel floor, and per-route FLOP accounting.
//
// FLOP convention: one multiply-add counts as 2 FLOPs. A block of
// convs_per_block convolutions runs its first convolution in_channels ->
// out_channels and every subsequent one out_channels -> out_channels.
// Biases, activations, normalizations and upsampling are not counted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace eeroute {

/// One convolutional block: channel counts, feature-map size, kernel side and
/// the number of convolutions composing the block (3 for a residual block
/// with a skip convolution).
struct ModuleSpec {
  int in_channels = 1;
  int out_channels = 1;
  int height = 1;
  int width = 1;
  int kernel = 3;
  int convs_per_block = 1;

  bool operator==(const ModuleSpec&) const = default;
};

inline void validate(const ModuleSpec& m) {
  if (m.in_channels < 1 || m.out_channels < 1 || m.height < 1 || m.width < 1 ||
      m.kernel < 1 || m.convs_per_block < 1)
    throw std::invalid_argument("ModuleSpec fields must all be >= 1");
}

/// Channel lightening rule: multiply by scale_factor, never dropping below
/// min_channels; channels already at or below the floor are left untouched.
struct ScalePolicy {
  double scale_factor = 1.0;  // in (0, 1]
  int min_channels = 1;
};

inline void validate(const ScalePolicy& p) {
  if (!(p.scale_factor > 0.0 && p.scale_factor <= 1.0))
    throw std::invalid_argument("scale_factor must lie in (0, 1]");
  if (p.min_channels < 1) throw std::invalid_argument("min_channels must be >= 1");
}

/// Applies the scale factor to a channel count, rounding half away from zero,
/// clamped to the policy floor. Counts at or below the floor pass through.
inline int scale_channels(int c, const ScalePolicy& policy) {
  if (c < 1) throw std::invalid_argument("channel count must be >= 1");
  validate(policy);
  if (c <= policy.min_channels) return c;
  auto scaled = static_cast<int>(std::llround(double(c) * policy.scale_factor));
  return std::max(scaled, policy.min_channels);
}

struct Branch {
  int attach_index = 1;  // 1-based backbone module after which the branch starts
  std::vector<ModuleSpec> modules;
};

/// Backbone schedule plus attached branch schedules; the object route costs
/// are computed over. Branch i is exit i (1-based); kBackboneExit selects the
/// full backbone route.
struct RouteGraph {
  std::vector<ModuleSpec> backbone;
  std::vector<Branch> branches;
};

inline constexpr int kBackboneExit = 0;

inline void validate(const RouteGraph& g) {
  const int n = static_cast<int>(g.backbone.size());
  if (n < 1) throw std::invalid_argument("backbone must be non-empty");
  for (const auto& m : g.backbone) validate(m);
  for (const auto& b : g.branches) {
    if (b.attach_index < 1 || b.attach_index > n - 1)
      throw std::out_of_range("branch attach_index out of range [1, N-1]");
    // Depth rule: attach_index + branch length = N.
    if (b.attach_index + static_cast<int>(b.modules.size()) != n)
      throw std::invalid_argument("branch violates depth rule attach_index + length = N");
    for (const auto& m : b.modules) validate(m);
    if (b.modules.front().in_channels != g.backbone[b.attach_index - 1].out_channels)
      throw std::invalid_argument(
          "branch input channels must equal backbone module attach_index's output channels");
  }
}

/// Builds the lightened schedule appended after backbone module attach_index
/// (1-based). The first module consumes the unscaled backbone feature width;
/// output channels follow the backbone's remaining schedule through
/// scale_channels; spatial dims, kernels and block sizes are copied.
inline std::vector<ModuleSpec> build_branch_schedule(const std::vector<ModuleSpec>& backbone,
                                                     int attach_index,
                                                     const ScalePolicy& policy) {
  const int n = static_cast<int>(backbone.size());
  if (attach_index < 1 || attach_index > n - 1)
    throw std::out_of_range("attach_index must lie in [1, N-1]");
  std::vector<ModuleSpec> branch;
  branch.reserve(n - attach_index);
  int prev_out = backbone[attach_index - 1].out_channels;
  for (int i = attach_index; i < n; ++i) {
    ModuleSpec m = backbone[i];
    m.in_channels = prev_out;
    m.out_channels = scale_channels(backbone[i].out_channels, policy);
    prev_out = m.out_channels;
    branch.push_back(m);
  }
  return branch;
}

/// FLOPs of one block under the convention in the header comment.
inline std::uint64_t flops_of_module(const ModuleSpec& m) {
  validate(m);
  const std::uint64_t px = std::uint64_t(m.height) * std::uint64_t(m.width);
  const std::uint64_t k2 = std::uint64_t(m.kernel) * std::uint64_t(m.kernel);
  const std::uint64_t out = std::uint64_t(m.out_channels);
  std::uint64_t per_pixel = std::uint64_t(m.in_channels) * out;
  per_pixel += std::uint64_t(m.convs_per_block - 1) * out * out;
  return 2 * k2 * per_pixel * px;
}

/// Total FLOPs of one computational route: backbone modules 1..k plus the
/// branch, or the whole backbone for kBackboneExit.
inline std::uint64_t route_cost(const RouteGraph& g, int exit_id) {
  validate(g);
  if (exit_id == kBackboneExit) {
    std::uint64_t total = 0;
    for (const auto& m : g.backbone) total += flops_of_module(m);
    return total;
  }
  if (exit_id < 1 || exit_id > static_cast<int>(g.branches.size()))
    throw std::out_of_range("unknown exit_id " + std::to_string(exit_id));
  const Branch& b = g.branches[exit_id - 1];
  std::uint64_t total = 0;
  for (int i = 0; i < b.attach_index; ++i) total += flops_of_module(g.backbone[i]);
  for (const auto& m : b.modules) total += flops_of_module(m);
  return total;
}

struct CostReport {
  std::vector<std::pair<int, std::uint64_t>> per_exit_flops;  // sorted by exit_id
  std::uint64_t backbone_flops = 0;
};

inline CostReport cost_report(const RouteGraph& g) {
  CostReport r;
  for (int e = 1; e <= static_cast<int>(g.branches.size()); ++e)
    r.per_exit_flops.emplace_back(e, route_cost(g, e));
  r.backbone_flops = route_cost(g, kBackboneExit);
  return r;
}

/// Negated least-squares slope of mean cost against threshold: positive when
/// cost falls as the threshold loosens, in FLOPs per quality-unit.
inline double savings_slope(const std::vector<std::pair<double, double>>& sweep) {
  if (sweep.size() < 2)
    throw std::invalid_argument("savings_slope needs at least 2 sweep points");
  double mt = 0.0, mc = 0.0;
  for (const auto& [t, c] : sweep) {
    mt += t;
    mc += c;
  }
  mt /= double(sweep.size());
  mc /= double(sweep.size());
  double num = 0.0, den = 0.0;
  for (const auto& [t, c] : sweep) {
    num += (t - mt) * (c - mc);
    den += (t - mt) * (t - mt);
  }
  if (den == 0.0) throw std::invalid_argument("all sweep thresholds are equal");
  return -num / den;
}

}  // namespace eeroute
