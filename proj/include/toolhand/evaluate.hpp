#pragma once

// Candidate metrics, 0-100 score normalization, and the Pareto front.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "toolhand/planner.hpp"

namespace toolhand {

enum class Orientation { higher_better, lower_better };

inline constexpr int kNumMetrics = 3;  // motion range, mean sliding, max torque
inline constexpr int kNumScores = kNumFPs * kNumMetrics;

inline const char* metricName(int m) {
  static const char* names[kNumMetrics] = {"motion_range", "mean_sliding", "max_torque"};
  return names[m];
}

inline Orientation metricOrientation(int m) {
  return m == 0 ? Orientation::higher_better : Orientation::lower_better;
}

/// |phi_end(+)| + |phi_end(-)|.
inline double metric_motion_range(const PathRecord& plus, const PathRecord& minus) {
  return motionRange(plus, minus);
}

/// Mean tangential sliding speed over the completed steps of both paths and
/// all contacts; 0 when no step completed.
inline double metric_mean_sliding(const PathRecord& plus, const PathRecord& minus) {
  double sum = 0.0;
  long count = 0;
  for (const PathRecord* p : {&plus, &minus}) {
    const int done = p->completedSteps();
    for (int k = 0; k < done; ++k)
      for (double v : p->steps[k].sliding) {
        sum += v;
        ++count;
      }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

/// Largest absolute joint torque over the steps of both paths with an
/// established equilibrium. A path without any such step contributes the
/// torques at its FP pose, recomputed under the path's tip force. NaN if the
/// FP pose itself has no feasible force set.
inline double metric_max_torque(const PathRecord& plus, const PathRecord& minus, const DesignParams& d,
                                const FPSpec& fp, const PlanContext& ctx, double tip_force) {
  double worst = 0.0;
  for (const PathRecord* p : {&plus, &minus}) {
    bool any = false;
    for (const auto& st : p->steps) {
      if (!st.equilibrium) continue;
      any = true;
      for (const Vec3& t : st.torques) worst = std::max(worst, t.cwiseAbs().maxCoeff());
    }
    if (any || p->steps.empty()) continue;
    const SystemState& s = p->steps.front().state;
    const ToolMotion axis = fpRotationAxis(s, d, fp, ctx.tool);
    const EquilibriumResult eq =
        equilibrium_feasible(s, d, fp, ctx.tool, TipForce::opposing(tip_force, p->direction), ctx.friction, axis);
    if (!eq.feasible) return std::numeric_limits<double>::quiet_NaN();
    for (const Vec3& t : joint_torques(s, d, fp, ctx.tool, eq.forces, axis.pose()))
      worst = std::max(worst, t.cwiseAbs().maxCoeff());
  }
  return worst;
}

/// Affine map of a population onto [0, 100], best to 100 and worst to 0.
/// A constant population maps to all 100.
inline std::vector<double> normalize_scores(const std::vector<double>& values, Orientation o) {
  if (values.empty()) throw DomainError("normalize_scores needs at least one value");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(values.size(), 100.0);
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = (values[i] - lo) / (hi - lo);
    out[i] = std::clamp(100.0 * (o == Orientation::higher_better ? t : 1.0 - t), 0.0, 100.0);
  }
  return out;
}

/// True if row a dominates row b (higher is better).
inline bool dominates(const std::vector<double>& a, const std::vector<double>& b) {
  bool strict = false;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j] < b[j]) return false;
    if (a[j] > b[j]) strict = true;
  }
  return strict;
}

/// Indices of the non-dominated rows, ascending. Identical rows are all kept.
inline std::vector<int> pareto_front(const std::vector<std::vector<double>>& rows) {
  const int n = static_cast<int>(rows.size());
  if (n == 0) throw DomainError("pareto_front needs at least one row");
  // sweep in decreasing score-sum order so dominators mostly come first
  std::vector<int> order(n);
  std::vector<double> sums(n);
  for (int i = 0; i < n; ++i) {
    order[i] = i;
    for (double v : rows[i]) sums[i] += v;
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sums[a] > sums[b]; });
  std::vector<int> front;
  for (int i : order) {
    bool dominated = false;
    for (int f : front)
      if (dominates(rows[f], rows[i])) {
        dominated = true;
        break;
      }
    if (dominated) continue;
    // rounded sums can tie a dominator with its victim
    std::erase_if(front, [&](int f) { return dominates(rows[i], rows[f]); });
    front.push_back(i);
  }
  std::sort(front.begin(), front.end());
  return front;
}

struct ScoreRow {
  DesignParams design;
  std::array<double, kNumScores> raw{};     // index fp * kNumMetrics + metric
  std::array<double, kNumScores> scores{};  // NaN for incomplete rows
  bool complete = true;
  bool pareto = false;
  bool wielding_success = false;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
};

/// Raw metrics of one candidate from its six paths (carve +, carve -, poke +, ...).
inline std::array<double, kNumScores> candidateMetrics(const std::vector<PathRecord>& paths,
                                                       const DesignParams& d,
                                                       const std::array<FPSpec, kNumFPs>& fps,
                                                       const PlanContext& ctx, double tip_force) {
  if (paths.size() != 2 * kNumFPs) throw DomainError("a candidate needs six paths");
  std::array<double, kNumScores> m{};
  for (int k = 0; k < kNumFPs; ++k) {
    const PathRecord& plus = paths[2 * k];
    const PathRecord& minus = paths[2 * k + 1];
    m[k * kNumMetrics + 0] = metric_motion_range(plus, minus);
    m[k * kNumMetrics + 1] = metric_mean_sliding(plus, minus);
    m[k * kNumMetrics + 2] = metric_max_torque(plus, minus, d, fps[k], ctx, tip_force);
  }
  return m;
}

/// Fills scores, wielding success, and Pareto membership. Incomplete rows and
/// rows with an undefined metric stay outside the normalization population.
inline void scoreTable(ScoreTable& t) {
  std::vector<int> pop;
  for (int i = 0; i < static_cast<int>(t.rows.size()); ++i) {
    ScoreRow& r = t.rows[i];
    r.pareto = false;
    r.scores.fill(std::numeric_limits<double>::quiet_NaN());
    if (r.complete && std::any_of(r.raw.begin(), r.raw.end(), [](double v) { return !std::isfinite(v); }))
      r.complete = false;
    r.wielding_success = r.complete;
    for (int k = 0; k < kNumFPs; ++k)
      if (!(r.raw[k * kNumMetrics] > 0.0)) r.wielding_success = false;
    if (r.complete) pop.push_back(i);
  }
  if (pop.empty()) return;
  for (int j = 0; j < kNumScores; ++j) {
    std::vector<double> v;
    for (int i : pop) v.push_back(t.rows[i].raw[j]);
    const std::vector<double> s = normalize_scores(v, metricOrientation(j % kNumMetrics));
    for (std::size_t p = 0; p < pop.size(); ++p) t.rows[pop[p]].scores[j] = s[p];
  }
  std::vector<std::vector<double>> m;
  for (int i : pop) m.emplace_back(t.rows[i].scores.begin(), t.rows[i].scores.end());
  for (int f : pareto_front(m)) t.rows[pop[f]].pareto = true;
}

}  // namespace toolhand
