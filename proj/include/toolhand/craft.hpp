#pragma once

// Multi-start search for the FP states of a seed design.

#include <algorithm>
#include <ostream>
#include <random>

#include "toolhand/pipeline.hpp"

namespace toolhand {

struct CraftConfig {
  int starts = 40;  // random starts per FP
  std::uint64_t rng_seed = 7;
  int workers = 1;
  int polish_iterations = 3000;
  // axial coordinate of the stationary pinch (carve has none)
  std::array<double, kNumFPs> pinch_a1 = {75.0, 50.0, 75.0};
  PlanConfig plan;  // a state is kept only if both directions move the tool
};

struct CraftResult {
  bool ok = false;
  std::string reason;
  Seed seed;
  std::array<double, kNumFPs> costs{};
};

/// Search table of one FP: tool regions for moving contacts, a fixed
/// stationary pinch, joint limits shrunk by the table margin, free wrist.
inline FPSpec craftSpec(FPKind kind, const ModelConfig& mc, const FPTableConfig& tc, const CraftConfig& cc) {
  FPSpec fp = makeTopology(kind);
  const int n = fp.numContacts();
  const int k = static_cast<int>(kind);
  for (auto& j : fp.idle_joints) j = {0.0, 0.0, 0.0};
  const auto stationary = fp.stationaryContacts();
  for (int i = 0; i < n; ++i) {
    if (fp.contacts[i].moving) {
      const ToolRegion& r = tc.regions[k][i];
      fp.theta_lo[layout::toolA1(i)] = r.a1_lo;
      fp.theta_hi[layout::toolA1(i)] = r.a1_hi;
      fp.theta_lo[layout::toolA2(i)] = r.a2_center - r.a2_halfwidth;
      fp.theta_hi[layout::toolA2(i)] = r.a2_center + r.a2_halfwidth;
    } else {
      fp.theta_lo[layout::toolA1(i)] = fp.theta_hi[layout::toolA1(i)] = cc.pinch_a1[k];
      fp.theta_lo[layout::toolA2(i)] = fp.theta_hi[layout::toolA2(i)] = i == stationary.front() ? 0.0 : kPi;
    }
    for (int j = 0; j < 3; ++j) {
      fp.theta_lo[layout::fingerVar(n, i) + j] = mc.limits.lo[j] + tc.joint_margin;
      fp.theta_hi[layout::fingerVar(n, i) + j] = mc.limits.hi[j] - tc.joint_margin;
    }
  }
  return fp;
}

/// Random start: finger joints and contact coordinates drawn inside the
/// table, hand placed so that the first contact touches.
inline SystemState craftStart(const DesignParams& d, const FPSpec& fp, const ModelConfig& mc, std::mt19937_64& rng) {
  const auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const double end = capsuleDomainEnd(d.finger_radius, d.distalBodyLength());
  SystemState st;
  for (int i = 0; i < fp.numContacts(); ++i) {
    ContactPair c;
    c.finger = fp.contacts[i].finger;
    c.joints = {U(0.2, 1.3), U(-0.2, 0.2), U(0.2, 1.3)};
    c.finger_a1 = U(0.3 * end, 0.9 * end);
    c.finger_a2 = -kPi / 2 + U(-0.5, 0.5);
    const double a1_lo = fp.theta_lo[layout::toolA1(i)], a1_hi = std::min(fp.theta_hi[layout::toolA1(i)], mc.tool.length);
    const double a2_lo = std::max(fp.theta_lo[layout::toolA2(i)], -kPi), a2_hi = std::min(fp.theta_hi[layout::toolA2(i)], kPi);
    c.tool = {a1_lo < a1_hi ? U(a1_lo, a1_hi) : a1_lo, a2_lo < a2_hi ? U(a2_lo, a2_hi) : a2_lo, 0.0};
    st.contacts.push_back(c);
  }
  const ContactPair& c0 = st.contacts[0];
  const Transform T_OC = cylinder_frame(mc.tool, {c0.tool.a1, c0.tool.a2, U(-kPi, kPi)});
  const Transform T_HP = fingerRootTransform(d, c0.finger) * finger_fk(d, c0.joints, {c0.finger_a1, c0.finger_a2, 0.0});
  const Transform T_OH = T_OC * makeTransform(rotX(kPi), Vec3::Zero()) * T_HP.inverse();
  st.hand = {T_OH.translation(), logSO3(T_OH.linear())};
  return st;
}

/// Solves every FP from `starts` random starts and keeps, per FP, the lowest
/// cost state that passes the seed tables built around it and moves the tool
/// in both directions.
inline CraftResult craftSeed(const DesignParams& d, const ModelConfig& mc, const FPTableConfig& tc,
                             const CraftConfig& cc, std::ostream* log = nullptr) {
  CraftResult out;
  out.seed.design = d;
  const PlanContext ctx = planContext(mc);
  for (int k = 0; k < kNumFPs; ++k) {
    const FPKind kind = static_cast<FPKind>(k);
    const FPSpec fp = craftSpec(kind, mc, tc, cc);
    std::vector<std::optional<FPSolution>> sols(cc.starts);
    parallelFor(cc.starts, cc.workers, [&](int s) {
      std::seed_seq seq{cc.rng_seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(s)};
      std::mt19937_64 rng(seq);
      const SystemState init = craftStart(d, fp, mc, rng);
      FPSolution sol = solveFP(init, d, fp, mc);
      if (!sol.ok) return;
      ModelConfig longer = mc;
      longer.nlp_max_iter = cc.polish_iterations;
      FPSolution pol = solveFP(sol.state, d, fp, longer);
      if (pol.ok) sol = pol;
      sols[s] = sol;
    });
    std::vector<int> order;
    for (int s = 0; s < cc.starts; ++s)
      if (sols[s]) order.push_back(s);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sols[a]->cost < sols[b]->cost; });
    if (log) *log << fpName(kind) << ": " << order.size() << " of " << cc.starts << " starts reached the FP" << std::endl;
    bool found = false;
    for (int s : order) {
      const SystemState st = canonicalState(sols[s]->state);
      const FPSpec table = defaultFPSpec(kind, st, fp.idle_joints, mc, tc);
      if (!checkFPState(st, d, table, mc).empty()) continue;
      PlanConfig pc = cc.plan;
      pc.direction = 1;
      const double plus = plan_path(st, d, table, ctx, pc).motion_range;
      pc.direction = -1;
      const double minus = plan_path(st, d, table, ctx, pc).motion_range;
      if (log) *log << "  start " << s << " cost " << sols[s]->cost << " ranges " << plus << " " << minus << std::endl;
      if (!(plus > 0.0 && minus > 0.0)) continue;
      out.seed.states[k] = st;
      out.seed.idle[k] = fp.idle_joints;
      out.costs[k] = sols[s]->cost;
      found = true;
      break;
    }
    if (!found) {
      out.reason = std::string(fpName(kind)) + ": no start produced a usable FP state";
      return out;
    }
  }
  out.ok = true;
  return out;
}

}  // namespace toolhand
