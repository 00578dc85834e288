#pragma once

// Statics of the tool under a tip force and the finger contact forces, joint
// torques, and capsule-capsule clearances with gradients.

#include <string>
#include <vector>

#include "toolhand/contact.hpp"
#include "toolhand/solve.hpp"

namespace toolhand {

struct FrictionModel {
  double mu = 0.5;
  int n_facets = 8;
  double f_normal_min = 0.1;  // N

  void validate() const {
    if (!(mu > 0.0)) throw DomainError("friction coefficient must be positive");
    if (n_facets < 4) throw DomainError("friction pyramid needs at least 4 facets");
    if (!(f_normal_min >= 0.0)) throw DomainError("minimum normal force must be non-negative");
  }
};

enum class TipDirection { cut_tangent_positive, cut_tangent_negative, explicit_vector };

struct TipForce {
  double magnitude = 10.0;  // N
  TipDirection direction = TipDirection::cut_tangent_positive;
  Vec3 vector = Vec3::UnitX();  // used by explicit_vector, unit norm

  void validate() const {
    if (!(magnitude >= 0.0)) throw DomainError("tip force magnitude must be non-negative");
    if (direction == TipDirection::explicit_vector && std::abs(vector.norm() - 1.0) > 1e-9)
      throw DomainError("explicit tip force direction must be a unit vector");
  }

  /// Force acting on the tool at its tip, in {O}.
  Vec3 force(const Vec3& cut_tangent) const {
    switch (direction) {
      case TipDirection::cut_tangent_positive: return magnitude * cut_tangent;
      case TipDirection::cut_tangent_negative: return -magnitude * cut_tangent;
      case TipDirection::explicit_vector: return magnitude * vector;
    }
    return Vec3::Zero();
  }

  /// Cutting resistance for a path in `direction` (+1 or -1): opposes motion.
  static TipForce opposing(double magnitude, int direction) {
    return {magnitude,
            direction > 0 ? TipDirection::cut_tangent_negative : TipDirection::cut_tangent_positive,
            Vec3::UnitX()};
  }
};

struct EquilibriumResult {
  bool feasible = false;
  /// Per-contact force exerted by the finger on the tool, in the tool Gauss
  /// frame at the contact (x, y tangent, z inward normal), N.
  std::vector<Vec3> forces;
  double balance_error = 0.0;
};

namespace detail {

/// Minimum-norm contact forces balancing a tip force, inside inscribed
/// friction pyramids. facet_scale multiplies every pyramid row.
inline EquilibriumResult equilibriumQP(const std::vector<ContactEval>& ev, const Vec3& tip_point,
                                       const Vec3& tip_force, const FrictionModel& fric,
                                       double facet_scale = 1.0) {
  const int n = static_cast<int>(ev.size());
  const int K = fric.n_facets;
  EquilibriumResult res;
  Vec3 ref = Vec3::Zero();
  for (const auto& e : ev) ref += e.pt;
  if (n > 0) ref /= n;

  QPProblem qp;
  qp.H = MatX::Identity(3 * n, 3 * n);
  qp.g = VecX::Zero(3 * n);
  qp.A_eq = MatX::Zero(6, 3 * n);
  for (int i = 0; i < n; ++i) {
    qp.A_eq.block<3, 3>(0, 3 * i) = ev[i].Rt;
    qp.A_eq.block<3, 3>(3, 3 * i) = skew(ev[i].pt - ref) * ev[i].Rt;
  }
  qp.b_eq.resize(6);
  qp.b_eq << -tip_force, -(tip_point - ref).cross(tip_force);
  qp.A_in = MatX::Zero(n * (K + 1), 3 * n);
  qp.b_in = VecX::Zero(n * (K + 1));
  const double cone = fric.mu * std::cos(kPi / K);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      const double a = (2 * k + 1) * kPi / K;
      qp.A_in.block<1, 3>(i * (K + 1) + k, 3 * i) =
          facet_scale * Eigen::RowVector3d(-std::cos(a), -std::sin(a), cone);
    }
    qp.A_in(i * (K + 1) + K, 3 * i + 2) = 1.0;
    qp.b_in[i * (K + 1) + K] = fric.f_normal_min;
  }
  QPOptions opt;
  opt.max_iter = 20 * (3 * n + 6);
  const QPResult sol = solve_qp(qp, opt);
  if (sol.status != QPStatus::optimal) return res;
  res.balance_error = (qp.A_eq * sol.x - qp.b_eq).cwiseAbs().maxCoeff();
  const double scale = 1.0 + tip_force.norm() * (1.0 + (tip_point - ref).norm());
  if (res.balance_error > 1e-7 * scale) return res;
  res.feasible = true;
  for (int i = 0; i < n; ++i) res.forces.push_back(sol.x.segment<3>(3 * i));
  return res;
}

}  // namespace detail

/// Static equilibrium of the tool at rest in the pose `motion.pose()` under
/// the tip force and friction-limited contact forces. The cutting direction
/// is the tip's path tangent about the motion axis.
inline EquilibriumResult equilibrium_feasible(const SystemState& s, const DesignParams& d,
                                              const FPSpec& fp, const ToolGeom& tool,
                                              const TipForce& tip, const FrictionModel& fric,
                                              const ToolMotion& motion) {
  if (s.numContacts() != fp.numContacts()) throw DomainError("state does not match the FP");
  const Transform pose = motion.pose();
  const auto ev = evaluateContacts(s, d, tool, pose);
  const Vec3 t = cutTangent(motion, tool);
  return detail::equilibriumQP(ev, pose * tool.tip(), tip.force(t), fric);
}

/// FP statics: the tool at rest, rotation axis from the FP rule.
inline EquilibriumResult equilibrium_feasible(const SystemState& s, const DesignParams& d,
                                              const FPSpec& fp, const ToolGeom& tool,
                                              const TipForce& tip, const FrictionModel& fric) {
  return equilibrium_feasible(s, d, fp, tool, tip, fric, fpRotationAxis(s, d, fp, tool));
}

/// Both cutting directions at the FP.
inline bool equilibriumBothDirections(const SystemState& s, const DesignParams& d,
                                      const FPSpec& fp, const ToolGeom& tool, double magnitude,
                                      const FrictionModel& fric) {
  const ToolMotion axis = fpRotationAxis(s, d, fp, tool);
  for (auto dir : {TipDirection::cut_tangent_positive, TipDirection::cut_tangent_negative}) {
    if (!equilibrium_feasible(s, d, fp, tool, TipForce{magnitude, dir, Vec3::UnitX()}, fric, axis).feasible)
      return false;
  }
  return true;
}

/// Joint torques (N mm) of each contacting finger holding the contact forces:
/// tau = Jv^T (-F), with F the force on the tool in {O}.
inline std::vector<Vec3> joint_torques(const SystemState& s, const DesignParams& d,
                                       const FPSpec& fp, const ToolGeom& tool,
                                       const std::vector<Vec3>& forces,
                                       const Transform& tool_pose = Transform::Identity()) {
  if (static_cast<int>(forces.size()) != fp.numContacts())
    throw DomainError("one force per contact expected");
  const auto ev = evaluateContacts(s, d, tool, tool_pose);
  std::vector<Vec3> tau;
  for (std::size_t i = 0; i < ev.size(); ++i)
    tau.push_back(ev[i].Jv.transpose() * (-(ev[i].Rt * forces[i])));
  return tau;
}

// ---------------------------------------------------------------------------
// Collisions
// ---------------------------------------------------------------------------

struct SegmentDistance {
  double distance = 0.0;
  Vec3 c1 = Vec3::Zero();
  Vec3 c2 = Vec3::Zero();
  double s = 0.0;  // parameter of c1 on the first segment
  double t = 0.0;
};

/// Exact distance between segments [p1, q1] and [p2, q2].
inline SegmentDistance segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2,
                                        const Vec3& q2) {
  const Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  constexpr double eps = 1e-18;
  double s = 0.0, t = 0.0;
  if (a <= eps && e <= eps) {
    s = t = 0.0;
  } else if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 1e-14 * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  SegmentDistance out;
  out.s = s;
  out.t = t;
  out.c1 = p1 + s * d1;
  out.c2 = p2 + t * d2;
  out.distance = (out.c1 - out.c2).norm();
  return out;
}

/// A capsule whose endpoints depend on the flattened state and on the tool
/// rotation angle.
struct CollisionBody {
  std::string name;
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  MatX da;  // 3 x dim
  MatX db;
  Vec3 da_phi = Vec3::Zero();
  Vec3 db_phi = Vec3::Zero();
  double radius = 0.0;
  int finger = -1;  // -1 for the tool
  bool distal = false;
};

struct CollisionPair {
  int body_a = 0;
  int body_b = 0;
};

struct CollisionReport {
  std::vector<std::string> names;
  VecX clearance;
  MatX gradient;      // rows per pair, columns over the flattened state
  VecX gradient_phi;  // derivative of each clearance with respect to the tool angle
  double min_clearance = kInf;
};

namespace detail {

inline std::vector<CollisionBody> collisionBodies(const SystemState& s, const DesignParams& d,
                                                  const FPSpec& fp, const ToolGeom& tool,
                                                  const ToolMotion& motion) {
  const int n = s.numContacts();
  const int dim = layout::dimension(n);
  const Transform T_OH = s.hand.transform();
  const Mat3 jl = leftJacobianSO3(s.hand.rotation);
  std::vector<CollisionBody> bodies;

  const auto handColumns = [&](const Vec3& q, MatX& D) {
    D.block<3, 3>(0, 0) = Mat3::Identity();
    D.block<3, 3>(0, 3) = -skew(q - T_OH.translation()) * jl;
  };

  for (int f = 0; f < kNumFingers; ++f) {
    const int ci = fp.contactOfFinger(f);
    const FingerJoints u = ci >= 0 ? s.contacts[ci].joints : fp.idle_joints[f];
    const Transform T_OR = T_OH * fingerRootTransform(d, f);
    const Mat3 Ror = T_OR.linear();
    const FingerLinkPoints fl = fingerLinks(d, u);
    const Vec3 root = T_OR * fl.root, ip = T_OR * fl.ip, tip = T_OR * fl.tip;
    for (int link = 0; link < 2; ++link) {
      CollisionBody b;
      b.name = std::string(fingerName(f)) + (link == 0 ? "_proximal" : "_distal");
      b.finger = f;
      b.distal = link == 1;
      b.radius = d.finger_radius;
      b.a = link == 0 ? root : ip;
      b.b = link == 0 ? ip : tip;
      b.da = MatX::Zero(3, dim);
      b.db = MatX::Zero(3, dim);
      handColumns(b.a, b.da);
      handColumns(b.b, b.db);
      if (ci >= 0) {
        const int o = layout::fingerVar(n, ci);
        if (link == 1) b.da.block<3, 3>(0, o) = Ror * fl.dip;
        b.db.block<3, 3>(0, o) = Ror * (link == 0 ? fl.dip : fl.dtip);
      }
      bodies.push_back(std::move(b));
    }
  }

  const Transform pose = motion.pose();
  CollisionBody t;
  t.name = "tool";
  t.radius = tool.radius;
  t.a = pose * Vec3(0.0, 0.0, 0.0);
  t.b = pose * Vec3(0.0, 0.0, tool.length);
  t.da = MatX::Zero(3, dim);
  t.db = MatX::Zero(3, dim);
  t.da_phi = motion.axis.cross(t.a - motion.center);
  t.db_phi = motion.axis.cross(t.b - motion.center);
  bodies.push_back(std::move(t));
  return bodies;
}

inline std::vector<CollisionPair> collisionPairs(const std::vector<CollisionBody>& bodies,
                                                 const FPSpec& fp) {
  std::vector<CollisionPair> pairs;
  const int nb = static_cast<int>(bodies.size());
  const int tool = nb - 1;
  for (int i = 0; i < tool; ++i)
    for (int j = i + 1; j < tool; ++j)
      if (bodies[i].finger != bodies[j].finger) pairs.push_back({i, j});
  for (int i = 0; i < tool; ++i) {
    if (bodies[i].distal && fp.contactOfFinger(bodies[i].finger) >= 0) continue;
    pairs.push_back({i, tool});
  }
  return pairs;
}

}  // namespace detail

/// Clearances (mm) of all checked capsule pairs: segment distance minus both
/// radii and the margin, with gradients.
inline CollisionReport collision_values(const SystemState& s, const DesignParams& d,
                                        const FPSpec& fp, const ToolGeom& tool, double margin,
                                        const ToolMotion& motion = ToolMotion{},
                                        bool with_gradient = false) {
  const auto bodies = detail::collisionBodies(s, d, fp, tool, motion);
  const auto pairs = detail::collisionPairs(bodies, fp);
  const int m = static_cast<int>(pairs.size());
  CollisionReport rep;
  rep.clearance.resize(m);
  if (with_gradient) {
    rep.gradient = MatX::Zero(m, layout::dimension(s.numContacts()));
    rep.gradient_phi = VecX::Zero(m);
  }
  for (int k = 0; k < m; ++k) {
    const CollisionBody& A = bodies[pairs[k].body_a];
    const CollisionBody& B = bodies[pairs[k].body_b];
    rep.names.push_back(A.name + "|" + B.name);
    const SegmentDistance sd = segment_distance(A.a, A.b, B.a, B.b);
    rep.clearance[k] = sd.distance - (A.radius + B.radius + margin);
    rep.min_clearance = std::min(rep.min_clearance, rep.clearance[k]);
    if (!with_gradient || sd.distance < 1e-12) continue;
    const Eigen::RowVector3d nrm = ((sd.c1 - sd.c2) / sd.distance).transpose();
    rep.gradient.row(k) = nrm * ((1.0 - sd.s) * A.da + sd.s * A.db - (1.0 - sd.t) * B.da - sd.t * B.db);
    rep.gradient_phi[k] =
        nrm * ((1.0 - sd.s) * A.da_phi + sd.s * A.db_phi - (1.0 - sd.t) * B.da_phi - sd.t * B.db_phi);
  }
  return rep;
}

}  // namespace toolhand
