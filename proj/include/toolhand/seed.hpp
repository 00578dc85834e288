#pragma once

// Default FP bound tables and the seed: a design with one solved state per
// FP from which sampling starts.

#include <array>
#include <cmath>
#include <string>

#include "toolhand/sampler.hpp"

namespace toolhand {

/// Box on the tool coordinates of one contact.
struct ToolRegion {
  double a1_lo = 0.0, a1_hi = 0.0;  // mm
  double a2_center = 0.0, a2_halfwidth = kPi;
};

struct FPTableConfig {
  double wrist_translation = 40.0;  // mm, half-width of the hand-position box around the seed
  double wrist_rotation = 0.8;      // rad, half-width of the hand-rotation box around the seed
  double joint_margin = 0.1;        // rad kept free inside the joint limits at FPs
  // moving contacts, in the order of each FP's contacts; stationary contacts
  // are fixed at their seed coordinates
  std::array<std::vector<ToolRegion>, kNumFPs> regions = {
      std::vector<ToolRegion>{{35, 65, -kPi / 2, 0.7}, {10, 30, kPi / 2, 0.7}, {70, 100, kPi / 2, 0.7}},
      std::vector<ToolRegion>{{}, {}, {20, 140, kPi / 2, 1.5}, {20, 140, -kPi / 2, 1.5}},
      std::vector<ToolRegion>{{}, {}, {10, 45, kPi / 2, 1.0}, {105, 140, kPi / 2, 1.0}}};

  void validate() const {
    if (!(wrist_translation > 0.0 && wrist_rotation > 0.0)) throw DomainError("wrist boxes must be positive");
    if (!(joint_margin >= 0.0)) throw DomainError("joint margin must be non-negative");
    for (int k = 0; k < kNumFPs; ++k) {
      const FPSpec topo = makeTopology(static_cast<FPKind>(k));
      if (static_cast<int>(regions[k].size()) != topo.numContacts())
        throw DomainError(std::string("tool regions for ") + fpName(topo.kind) + " need one entry per contact");
      for (int i : topo.movingContacts()) {
        const ToolRegion& r = regions[k][i];
        if (!(r.a1_lo <= r.a1_hi) || !(r.a2_halfwidth >= 0.0))
          throw DomainError(std::string("tool region inverted for ") + fpName(topo.kind));
      }
    }
  }
};

/// Default bound table of one FP built around its seed state.
inline FPSpec defaultFPSpec(FPKind kind, const SystemState& seed,
                            const std::array<FingerJoints, kNumFingers>& idle, const ModelConfig& mc,
                            const FPTableConfig& tc) {
  FPSpec fp = makeTopology(kind);
  const int n = fp.numContacts();
  if (seed.numContacts() != n) throw DomainError("seed state does not match the FP topology");
  fp.idle_joints = idle;
  VecX& lo = fp.theta_lo;
  VecX& hi = fp.theta_hi;
  for (int j = 0; j < 3; ++j) {
    lo[j] = seed.hand.translation[j] - tc.wrist_translation;
    hi[j] = seed.hand.translation[j] + tc.wrist_translation;
    lo[3 + j] = seed.hand.rotation[j] - tc.wrist_rotation;
    hi[3 + j] = seed.hand.rotation[j] + tc.wrist_rotation;
  }
  const auto& reg = tc.regions[static_cast<int>(kind)];
  for (int i = 0; i < n; ++i) {
    const auto& c = seed.contacts[i];
    if (fp.contacts[i].moving) {
      lo[layout::toolA1(i)] = reg[i].a1_lo;
      hi[layout::toolA1(i)] = reg[i].a1_hi;
      lo[layout::toolA2(i)] = reg[i].a2_center - reg[i].a2_halfwidth;
      hi[layout::toolA2(i)] = reg[i].a2_center + reg[i].a2_halfwidth;
    } else {
      lo[layout::toolA1(i)] = hi[layout::toolA1(i)] = c.tool.a1;
      lo[layout::toolA2(i)] = hi[layout::toolA2(i)] = c.tool.a2;
    }
    const int f = layout::fingerVar(n, i);
    for (int j = 0; j < 3; ++j) {
      lo[f + j] = mc.limits.lo[j] + tc.joint_margin;
      hi[f + j] = mc.limits.hi[j] - tc.joint_margin;
    }
  }
  return fp;
}

/// Rotation vector with norm at most pi describing the same rotation.
inline Vec3 canonicalRotation(const Vec3& w) {
  const double a = w.norm();
  if (a <= kPi) return w;
  return w * (wrapAngle(a) / a);
}

/// Same configuration with the hand rotation vector and the periodic
/// contact coordinates in their principal ranges.
inline SystemState canonicalState(SystemState s) {
  s.hand.rotation = canonicalRotation(s.hand.rotation);
  for (auto& c : s.contacts) {
    c.tool.a2 = wrapAngle(c.tool.a2);
    c.tool.spin = wrapAngle(c.tool.spin);
    c.finger_a2 = wrapAngle(c.finger_a2);
  }
  return s;
}

struct Seed {
  DesignParams design;
  std::array<SystemState, kNumFPs> states;
  std::array<std::array<FingerJoints, kNumFingers>, kNumFPs> idle{};
};

/// Bound tables of all three FPs for a seed.
inline std::array<FPSpec, kNumFPs> defaultFPSpecs(const Seed& seed, const ModelConfig& mc,
                                                  const FPTableConfig& tc) {
  std::array<FPSpec, kNumFPs> out;
  for (int k = 0; k < kNumFPs; ++k)
    out[k] = defaultFPSpec(static_cast<FPKind>(k), seed.states[k], seed.idle[k], mc, tc);
  return out;
}

/// Bootstrap check: the seed solves all three FPs from its own states.
/// Returns "<fp>: <condition>" for the first failure, empty on success.
inline std::string validateSeed(const Seed& seed, const std::array<FPSpec, kNumFPs>& fps,
                                const ModelConfig& mc) {
  if (!mc.bounds.contains(seed.design)) return "design: outside the design bounds";
  for (int k = 0; k < kNumFPs; ++k) {
    const std::string r = checkFPState(seed.states[k], seed.design, fps[k], mc);
    if (!r.empty()) return std::string(fpName(fps[k].kind)) + ": " + r;
  }
  return {};
}

}  // namespace toolhand
