#pragma once

#include <vector>

#include "toolhand/model.hpp"

namespace toolhand {

/// One tool-finger contact: coordinates on both surfaces and the joints of
/// the contacting finger. tool.spin is the in-plane angle of the finger's
/// Gauss x-axis measured in the tool's tangent frame.
struct ContactPair {
  int finger = 0;
  SurfaceCoords tool;
  FingerJoints joints;
  double finger_a1 = 0.0;
  double finger_a2 = 0.0;
  bool operator==(const ContactPair&) const = default;
};

/// All joint and contact variables of the tool-hand system at one pose.
/// Flattened order: [hand(6), (u_t, a_t1, a_t2) per contact,
/// (u_f1, u_f2, u_f3, a_f1, a_f2) per contact], i.e. 8n + 6 scalars.
struct SystemState {
  HandPose hand;
  std::vector<ContactPair> contacts;

  int numContacts() const { return static_cast<int>(contacts.size()); }
  int dimension() const { return 8 * numContacts() + 6; }

  VecX flatten() const {
    const int n = numContacts();
    VecX v(dimension());
    v.head<6>() = hand.vector();
    for (int i = 0; i < n; ++i) {
      const ContactPair& c = contacts[i];
      v.segment<3>(6 + 3 * i) << c.tool.spin, c.tool.a1, c.tool.a2;
      v.segment<5>(6 + 3 * n + 5 * i) << c.joints.mcp_flex, c.joints.mcp_abd, c.joints.ip_flex,
          c.finger_a1, c.finger_a2;
    }
    return v;
  }

  /// Inverse of flatten(); finger assignment is taken from `like`.
  static SystemState unflatten(const VecX& v, const SystemState& like) {
    SystemState s = like;
    const int n = like.numContacts();
    s.hand = HandPose::fromVector(v.head<6>());
    for (int i = 0; i < n; ++i) {
      ContactPair& c = s.contacts[i];
      c.tool = {v[6 + 3 * i + 1], v[6 + 3 * i + 2], v[6 + 3 * i]};
      const int o = 6 + 3 * n + 5 * i;
      c.joints = {v[o], v[o + 1], v[o + 2]};
      c.finger_a1 = v[o + 3];
      c.finger_a2 = v[o + 4];
    }
    return s;
  }

  bool operator==(const SystemState& o) const {
    return hand.vector() == o.hand.vector() && contacts == o.contacts;
  }
};

/// Index helpers for the flattened state.
namespace layout {
inline constexpr int kHand = 0;
inline int toolSpin(int i) { return 6 + 3 * i; }
inline int toolA1(int i) { return 6 + 3 * i + 1; }
inline int toolA2(int i) { return 6 + 3 * i + 2; }
inline int fingerVar(int n, int i) { return 6 + 3 * n + 5 * i; }
inline int dimension(int n) { return 8 * n + 6; }
}  // namespace layout

}  // namespace toolhand
