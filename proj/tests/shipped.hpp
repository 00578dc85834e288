#pragma once

#include <string>

#include "toolhand/pipeline.hpp"

namespace toolhand::test {

/// Pipeline built from the shipped example configuration and seed.
inline const Pipeline& shipped() {
  static const Pipeline p = Pipeline::load(std::string(TOOLHAND_DATA_DIR) + "/config.json");
  return p;
}

/// Both planned directions of every FP of the shipped seed.
inline const std::vector<PathRecord>& shippedPaths() {
  static const std::vector<PathRecord> paths = [] {
    const Pipeline& p = shipped();
    return plan_all(p.seed.states, p.seed.design, p.fps, p.context(), p.cfg.plan);
  }();
  return paths;
}

/// RK4 end-state errors over a 0.2 s segment of `path` with fixed rates,
/// against a 320-step reference. The fingertip curvature jumps where the cap
/// meets the body, so the segment starts at the first recorded step whose
/// moving contacts lie more than 1 mm from that seam and must not cross it.
struct RK4Check {
  double coarse = 0.0;  // 10 steps
  double fine = 0.0;    // 20 steps
  std::string problem;
  double ratio() const { return coarse / fine; }
};

inline RK4Check rk4Check(const Pipeline& pl, const PathRecord& path, const DesignParams& d) {
  RK4Check out;
  const FPSpec& fp = pl.fps[static_cast<int>(path.fp)];
  const PlanContext ctx = pl.context();
  const double seam = d.distalBodyLength();
  const auto sides = [&](const SystemState& s) {
    std::vector<int> side;
    for (const auto& c : s.contacts) side.push_back(c.finger_a1 > seam ? 1 : -1);
    return side;
  };
  const auto gap = [&](const SystemState& s) {
    double g = kInf;
    for (int i : fp.movingContacts()) g = std::min(g, std::abs(s.contacts[i].finger_a1 - seam));
    return g;
  };
  int start = -1;
  for (int i = 0; i < path.completedSteps() && start < 0; ++i)
    if (gap(path.steps[i].state) > 1.0) start = i;
  if (start < 0) {
    out.problem = "no recorded step clear of the fingertip seam";
    return out;
  }
  const StepRecord& st = path.steps[start];
  const ToolMotion axis = fpRotationAxis(path.steps[0].state, d, fp, ctx.tool);
  const double u_t = path.direction * pl.cfg.plan.u_t_dot, T = 0.2;
  const auto run = [&](int steps) {
    SystemState s = st.state;
    double phi = st.phi;
    for (int i = 0; i < steps; ++i) s = advance(s, phi, d, fp, ctx, axis, u_t, st.rates, T / steps, 0.0);
    return s;
  };
  const SystemState ref = run(320);
  if (sides(ref) != sides(st.state)) {
    out.problem = "segment crosses the fingertip seam";
    return out;
  }
  out.coarse = (run(10).flatten() - ref.flatten()).cwiseAbs().maxCoeff();
  out.fine = (run(20).flatten() - ref.flatten()).cwiseAbs().maxCoeff();
  if (!(out.fine > 0.0)) out.problem = "no integration error at 20 steps";
  return out;
}

}  // namespace toolhand::test
