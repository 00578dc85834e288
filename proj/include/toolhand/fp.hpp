#pragma once

// Foundational-pose (FP) specifications: contact topology, which fingers
// move with the tool, the tool rotation axis rule, the cost, and the bounds
// on the flattened system state.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "toolhand/state.hpp"

namespace toolhand {

enum class FPKind { carve = 0, poke = 1, press = 2 };
inline constexpr int kNumFPs = 3;

enum class AxisRule { carve_centroid, stationary_pinch };
enum class CostSelector { carve_moment, pinch_alignment };

inline const char* fpName(FPKind k) {
  switch (k) {
    case FPKind::carve: return "carve";
    case FPKind::poke: return "poke";
    case FPKind::press: return "press";
  }
  return "?";
}

inline std::optional<FPKind> parseFP(std::string_view s) {
  if (s == "carve") return FPKind::carve;
  if (s == "poke") return FPKind::poke;
  if (s == "press") return FPKind::press;
  return std::nullopt;
}

struct ContactRole {
  int finger = 0;
  bool moving = true;
  int pinch = -1;  // pinch group id; -1 when the contact is not part of a pinch
};

struct FPSpec {
  FPKind kind = FPKind::carve;
  std::vector<ContactRole> contacts;
  AxisRule axis_rule = AxisRule::carve_centroid;
  CostSelector cost = CostSelector::carve_moment;
  VecX theta_lo;  // absolute bounds on the flattened state, size 8n + 6
  VecX theta_hi;
  std::array<FingerJoints, kNumFingers> idle_joints{};  // fingers not in contact

  int numContacts() const { return static_cast<int>(contacts.size()); }
  int dimension() const { return layout::dimension(numContacts()); }

  std::vector<int> movingContacts() const {
    std::vector<int> out;
    for (int i = 0; i < numContacts(); ++i)
      if (contacts[i].moving) out.push_back(i);
    return out;
  }
  std::vector<int> stationaryContacts() const {
    std::vector<int> out;
    for (int i = 0; i < numContacts(); ++i)
      if (!contacts[i].moving) out.push_back(i);
    return out;
  }
  std::vector<std::pair<int, int>> pinches() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < numContacts(); ++i)
      for (int j = i + 1; j < numContacts(); ++j)
        if (contacts[i].pinch >= 0 && contacts[i].pinch == contacts[j].pinch) out.emplace_back(i, j);
    return out;
  }
  /// Contact index of finger f, or -1 when f does not touch the tool.
  int contactOfFinger(int f) const {
    for (int i = 0; i < numContacts(); ++i)
      if (contacts[i].finger == f) return i;
    return -1;
  }

  void validate() const {
    const int n = numContacts();
    const int moving = static_cast<int>(movingContacts().size());
    if (kind == FPKind::carve) {
      if (n != 3 || moving != 3) throw DomainError("carve requires 3 moving contacts");
    } else {
      if (n != 4 || moving != 2) throw DomainError("poke/press require 4 contacts, 2 moving");
      if (axis_rule == AxisRule::stationary_pinch && stationaryContacts().size() != 2)
        throw DomainError("stationary pinch needs exactly two stationary contacts");
    }
    std::array<int, kNumFingers> seen{};
    for (const auto& c : contacts) {
      if (c.finger < 0 || c.finger >= kNumFingers) throw DomainError("finger index out of range");
      if (seen[c.finger]++) throw DomainError("one contact per finger");
    }
    if (theta_lo.size() != dimension() || theta_hi.size() != dimension())
      throw DomainError("FP bounds do not match the state dimension");
    if (((theta_hi - theta_lo).array() < 0.0).any()) throw DomainError("FP bounds inverted");
  }
};

/// Contact topology of the three foundational poses.
///  carve: thumb, index and middle in a tripod, all moving.
///  poke:  thumb-middle pinch held still, index-ring pinch moving.
///  press: thumb-middle pinch held still at the tool middle, index and ring
///         pressing near the two ends.
inline FPSpec makeTopology(FPKind kind) {
  FPSpec fp;
  fp.kind = kind;
  constexpr int I = 0, M = 1, R = 2, T = 3;
  switch (kind) {
    case FPKind::carve:
      fp.contacts = {{T, true, -1}, {I, true, -1}, {M, true, -1}};
      fp.axis_rule = AxisRule::carve_centroid;
      fp.cost = CostSelector::carve_moment;
      break;
    case FPKind::poke:
      fp.contacts = {{T, false, 0}, {M, false, 0}, {I, true, 1}, {R, true, 1}};
      fp.axis_rule = AxisRule::stationary_pinch;
      fp.cost = CostSelector::pinch_alignment;
      break;
    case FPKind::press:
      fp.contacts = {{T, false, 0}, {M, false, 0}, {I, true, -1}, {R, true, -1}};
      fp.axis_rule = AxisRule::stationary_pinch;
      fp.cost = CostSelector::pinch_alignment;
      break;
  }
  const int n = fp.numContacts();
  fp.theta_lo = VecX::Constant(layout::dimension(n), -1e9);
  fp.theta_hi = VecX::Constant(layout::dimension(n), 1e9);
  return fp;
}

}  // namespace toolhand
