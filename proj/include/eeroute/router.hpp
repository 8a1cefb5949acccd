#pragma once

// Threshold-driven exit selection and the experiment mathematics around it:
// threshold sweeps, Gaussian KDE, single-branch vs predictor-routed score
// distributions, and attribute/exit rank correlation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "eeroute/cost_model.hpp"
#include "eeroute/difficulty_sim.hpp"
#include "eeroute/predictor.hpp"

namespace eeroute {

/// Exit costs sorted ascending by cost plus the backbone fallback. The
/// backbone's predicted score is 0 by definition, so the fallback is always
/// feasible.
struct RoutingPolicy {
  double threshold = 0.0;                                // quality units, lower is better
  std::vector<std::pair<int, double>> exit_costs;        // (exit_id, cost), ascending by cost
  double backbone_cost = 0.0;

  static RoutingPolicy make(double threshold, std::span<const double> branch_costs,
                            double backbone_cost) {
    RoutingPolicy p;
    p.threshold = threshold;
    p.backbone_cost = backbone_cost;
    for (std::size_t i = 0; i < branch_costs.size(); ++i)
      p.exit_costs.emplace_back(static_cast<int>(i) + 1, branch_costs[i]);
    std::stable_sort(p.exit_costs.begin(), p.exit_costs.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });
    validate(p);
    return p;
  }

  static void validate(const RoutingPolicy& p) {
    double max_branch = 0.0;
    for (const auto& [id, cost] : p.exit_costs) {
      if (!(cost > 0.0)) throw std::invalid_argument("exit costs must be strictly positive");
      max_branch = std::max(max_branch, cost);
    }
    if (p.backbone_cost < max_branch)
      throw std::invalid_argument("backbone cost must be >= every branch cost");
  }
};

struct RoutingOutcome {
  int chosen_exit = kBackboneExit;
  double predicted_score = 0.0;
  double cost = 0.0;
};

/// Picks the cheapest exit whose predicted score meets the threshold; falls
/// back to the backbone (score 0) when none qualifies. Equal-cost exits
/// resolve to the lowest exit_id via the stable cost ordering.
inline RoutingOutcome select_exit(std::span<const double> scores, const RoutingPolicy& policy) {
  if (scores.size() != policy.exit_costs.size())
    throw std::invalid_argument("score count does not match exit count");
  for (const auto& [exit_id, cost] : policy.exit_costs) {
    const double s = scores[exit_id - 1];
    if (s <= policy.threshold) return RoutingOutcome{exit_id, s, cost};
  }
  return RoutingOutcome{kBackboneExit, 0.0, policy.backbone_cost};
}

struct SweepRow {
  double threshold = 0.0;
  std::vector<std::size_t> exit_counts;  // per exit_id 1..B, then backbone last
  double total_cost = 0.0;
  double mean_cost = 0.0;
  double violation_rate = 0.0;  // fraction whose TRUE score at the chosen exit exceeds the threshold
};

struct SweepReport {
  std::vector<SweepRow> rows;
};

/// Routes every input at every threshold using predicted scores; violations
/// are counted against the true scores (backbone choices never violate).
inline SweepReport sweep(const std::vector<std::vector<double>>& predicted,
                         const std::vector<std::vector<double>>& truth,
                         std::span<const double> branch_costs, double backbone_cost,
                         std::span<const double> thresholds) {
  if (predicted.empty() || thresholds.empty())
    throw std::invalid_argument("sweep: empty inputs or thresholds");
  if (predicted.size() != truth.size())
    throw std::invalid_argument("sweep: predicted/truth size mismatch");
  SweepReport report;
  for (double t : thresholds) {
    auto policy = RoutingPolicy::make(t, branch_costs, backbone_cost);
    SweepRow row;
    row.threshold = t;
    row.exit_counts.assign(branch_costs.size() + 1, 0);
    std::size_t violations = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      auto outcome = select_exit(predicted[i], policy);
      row.total_cost += outcome.cost;
      if (outcome.chosen_exit == kBackboneExit) {
        row.exit_counts.back()++;
      } else {
        row.exit_counts[outcome.chosen_exit - 1]++;
        if (truth[i][outcome.chosen_exit - 1] > t) ++violations;
      }
    }
    row.mean_cost = row.total_cost / double(predicted.size());
    row.violation_rate = double(violations) / double(predicted.size());
    report.rows.push_back(std::move(row));
  }
  return report;
}

/// Convenience overload: predictions from the model, truths from the oracle.
inline SweepReport sweep(const std::vector<SimInput>& inputs, const Mlp& model,
                         const QualityOracle& oracle, std::span<const double> branch_costs,
                         double backbone_cost, std::span<const double> thresholds) {
  std::vector<std::vector<double>> predicted, truth;
  predicted.reserve(inputs.size());
  truth.reserve(inputs.size());
  for (const auto& in : inputs) {
    predicted.push_back(model.forward(in.features));
    truth.push_back(oracle.true_scores(in));
  }
  return sweep(predicted, truth, branch_costs, backbone_cost, thresholds);
}

/// Gaussian kernel density estimate evaluated on a grid:
/// density(x) = 1/(n h sqrt(2 pi)) * sum_i exp(-(x - s_i)^2 / (2 h^2)).
inline std::vector<double> kde(std::span<const double> samples, double bandwidth,
                               std::span<const double> grid) {
  if (samples.empty()) throw std::invalid_argument("kde: empty samples");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("kde: bandwidth must be > 0");
  const double norm = 1.0 / (double(samples.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> densities;
  densities.reserve(grid.size());
  for (double x : grid) {
    double acc = 0.0;
    for (double s : samples) {
      const double u = (x - s) / bandwidth;
      acc += std::exp(-0.5 * u * u);
    }
    densities.push_back(norm * acc);
  }
  return densities;
}

struct AblationReport {
  std::vector<double> forced_scores;   // true scores forcing every input through exit_id
  std::vector<double> routed_scores;   // true scores at the predictor-chosen exits
  double threshold = 0.0;              // mean of forced_scores
  double forced_exceedance = 0.0;      // fraction of forced_scores above threshold
  double routed_exceedance = 0.0;
};

/// Single-branch vs predictor-routed quality distributions for one exit. The
/// routing threshold is set to the forced distribution's mean; a backbone
/// choice contributes a true score of 0.
inline AblationReport branch_vs_predictor(const std::vector<SimInput>& inputs, const Mlp& model,
                                          const QualityOracle& oracle,
                                          std::span<const double> branch_costs,
                                          double backbone_cost, int exit_id) {
  if (exit_id < 1 || exit_id > oracle.exit_count())
    throw std::out_of_range("branch_vs_predictor: bad exit_id");
  AblationReport rep;
  std::vector<std::vector<double>> truths;
  truths.reserve(inputs.size());
  for (const auto& in : inputs) {
    truths.push_back(oracle.true_scores(in));
    rep.forced_scores.push_back(truths.back()[exit_id - 1]);
  }
  double mean = 0.0;
  for (double s : rep.forced_scores) mean += s;
  rep.threshold = mean / double(rep.forced_scores.size());

  auto policy = RoutingPolicy::make(rep.threshold, branch_costs, backbone_cost);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto outcome = select_exit(model.forward(inputs[i].features), policy);
    rep.routed_scores.push_back(
        outcome.chosen_exit == kBackboneExit ? 0.0 : truths[i][outcome.chosen_exit - 1]);
  }
  auto exceedance = [&](const std::vector<double>& v) {
    std::size_t over = 0;
    for (double s : v)
      if (s > rep.threshold) ++over;
    return double(over) / double(v.size());
  };
  rep.forced_exceedance = exceedance(rep.forced_scores);
  rep.routed_exceedance = exceedance(rep.routed_scores);
  return rep;
}

/// Average-rank Spearman correlation. Throws when either side is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equally sized series");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (double(i) + double(j)) / 2.0 + 1.0;  // ties get the average rank
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto ra = ranks(a), rb = ranks(b);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= double(ra.size());
  mb /= double(rb.size());
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0)
    throw std::invalid_argument("spearman: correlation undefined for a constant series");
  return num / std::sqrt(da * db);
}

/// Spearman rank correlation between a per-input attribute and the index of
/// the predictor-chosen exit at a fixed threshold. The backbone counts as the
/// latest index (branch count + 1).
inline double difficulty_correlation(const std::vector<SimInput>& inputs, const Mlp& model,
                                     std::span<const double> attributes,
                                     std::span<const double> branch_costs, double backbone_cost,
                                     double threshold) {
  if (inputs.size() != attributes.size())
    throw std::invalid_argument("difficulty_correlation: attribute per input required");
  auto policy = RoutingPolicy::make(threshold, branch_costs, backbone_cost);
  std::vector<double> exit_indices;
  exit_indices.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto outcome = select_exit(model.forward(in.features), policy);
    exit_indices.push_back(outcome.chosen_exit == kBackboneExit
                               ? double(branch_costs.size()) + 1.0
                               : double(outcome.chosen_exit));
  }
  return spearman(attributes, exit_indices);
}

}  // namespace eeroute
