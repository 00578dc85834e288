#pragma once

// Contact constraints between the tool cylinder and the distal finger
// capsules, the stacked reach-FP residual with its analytic Jacobian, the
// relative-velocity Jacobian, and first-order roll-slide contact evolution.

#include <stdexcept>
#include <vector>

#include "toolhand/fp.hpp"

namespace toolhand {

class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StaleStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pose of the tool body: rotation by `angle` about a line fixed in {O}.
struct ToolMotion {
  Vec3 center = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();
  double angle = 0.0;

  Transform pose() const { return rotationAboutLine(center, axis, angle); }
};

/// [p_OC - p_OP ; z_OC + z_OP]. Zero iff the origins coincide and the
/// normals are anti-aligned.
inline Vec6 contact_residual(const Transform& T_OC, const Transform& T_OP) {
  Vec6 r;
  r << T_OC.translation() - T_OP.translation(), T_OC.linear().col(2) + T_OP.linear().col(2);
  return r;
}

using Mat35 = Eigen::Matrix<double, 3, 5>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

/// Both sides of one contact evaluated in {O}, with partials.
struct ContactEval {
  // tool side
  Vec3 pt = Vec3::Zero();
  Mat3 Rt = Mat3::Identity();  // Gauss frame, no spin
  Mat32 dpt = Mat32::Zero();
  std::array<Mat32, 3> dRt{};
  Mat2 Mt = Mat2::Identity();
  Mat2 Kt = Mat2::Zero();
  Eigen::RowVector2d Tt = Eigen::RowVector2d::Zero();
  // finger side; columns of the 3x5 blocks follow (u1, u2, u3, a1, a2)
  Vec3 pf = Vec3::Zero();
  Mat3 Rf = Mat3::Identity();
  Mat35 dpf = Mat35::Zero();
  std::array<Mat35, 3> dRf{};
  Mat36 dpf_hand = Mat36::Zero();
  std::array<Mat36, 3> dRf_hand{};
  Mat3 Jv = Mat3::Zero();  // contact-point velocity per joint rate
  Mat3 Jw = Mat3::Zero();  // link angular velocity per joint rate
  Mat2 Mf = Mat2::Identity();
  Mat2 Kf = Mat2::Zero();
  Eigen::RowVector2d Tf = Eigen::RowVector2d::Zero();
  double finger_a1 = 0.0;
  double finger_domain_end = 0.0;
  double finger_radius = 0.0;
  double spin = 0.0;

  /// Tool contact frame {C}: the Gauss frame turned by the spin.
  Mat3 contactFrame() const { return withSpin(Rt, spin); }
};

inline ContactEval evaluateContact(const ContactPair& c, const DesignParams& d, const ToolGeom& tool,
                                   const Transform& T_OH, const Mat3& hand_jl,
                                   const Transform& tool_pose) {
  ContactEval e;
  const SurfacePatch tp = cylinderPatch(tool, c.tool.a1, c.tool.a2);
  const Mat3 Rtool = tool_pose.linear();
  e.pt = tool_pose * tp.p;
  e.Rt = Rtool * tp.R;
  e.dpt = Rtool * tp.dp;
  e.dRt = {Rtool * tp.dx, Rtool * tp.dy, Rtool * tp.dz};
  e.Mt = tp.metric;
  e.Kt = tp.curvature;
  e.Tt = tp.torsion;
  e.spin = c.tool.spin;

  const FingerContactKinematics fk = fingerContact(d, c.joints, c.finger_a1, c.finger_a2);
  const Transform T_OR = T_OH * fingerRootTransform(d, c.finger);
  const Mat3 Ror = T_OR.linear();
  e.pf = T_OR * fk.p;
  e.Rf = Ror * fk.R;
  e.dpf.leftCols<3>() = Ror * fk.dp_du;
  e.dpf.rightCols<2>() = Ror * fk.dp_da;
  for (int col = 0; col < 3; ++col) {
    for (int j = 0; j < 3; ++j) e.dRf[col].col(j) = Ror * fk.dR_du[j].col(col);
    e.dRf[col].rightCols<2>() = Ror * fk.dcols_da[col];
  }
  // p = R_h q + t  =>  dp/dt = I, dp/dw = -[R_h q]x J_l(w)
  const Vec3 rel = e.pf - T_OH.translation();
  e.dpf_hand.leftCols<3>() = Mat3::Identity();
  e.dpf_hand.rightCols<3>() = -skew(rel) * hand_jl;
  for (int col = 0; col < 3; ++col) {
    e.dRf_hand[col].leftCols<3>().setZero();
    e.dRf_hand[col].rightCols<3>() = -skew(e.Rf.col(col)) * hand_jl;
  }
  e.Jv = Ror * fk.dp_du;
  e.Jw = Ror * fk.axes;
  e.Mf = fk.local.metric;
  e.Kf = fk.local.curvature;
  e.Tf = fk.local.torsion;
  e.finger_a1 = c.finger_a1;
  e.finger_domain_end = capsuleDomainEnd(d.finger_radius, d.distalBodyLength());
  e.finger_radius = d.finger_radius;
  return e;
}

inline std::vector<ContactEval> evaluateContacts(const SystemState& s, const DesignParams& d,
                                                 const ToolGeom& tool,
                                                 const Transform& tool_pose = Transform::Identity()) {
  const Transform T_OH = s.hand.transform();
  const Mat3 jl = leftJacobianSO3(s.hand.rotation);
  std::vector<ContactEval> out;
  out.reserve(s.contacts.size());
  for (const auto& c : s.contacts) out.push_back(evaluateContact(c, d, tool, T_OH, jl, tool_pose));
  return out;
}

/// Stacked 6n residual with optional 6n x (8n+6) Jacobian.
inline VecX contactResidual6(const SystemState& s, const DesignParams& d, const ToolGeom& tool,
                             const Transform& tool_pose = Transform::Identity(),
                             MatX* jac = nullptr) {
  const int n = s.numContacts();
  const auto ev = evaluateContacts(s, d, tool, tool_pose);
  VecX r(6 * n);
  if (jac) jac->setZero(6 * n, layout::dimension(n));
  for (int i = 0; i < n; ++i) {
    const ContactEval& e = ev[i];
    r.segment<3>(6 * i) = e.pt - e.pf;
    r.segment<3>(6 * i + 3) = e.Rt.col(2) + e.Rf.col(2);
    if (!jac) continue;
    auto J = jac->middleRows(6 * i, 6);
    J.block<3, 2>(0, layout::toolA1(i)) = e.dpt;
    J.block<3, 2>(3, layout::toolA1(i)) = e.dRt[2];
    const int f = layout::fingerVar(n, i);
    J.block<3, 5>(0, f) = -e.dpf;
    J.block<3, 5>(3, f) = e.dRf[2];
    J.block<3, 6>(0, 0) = -e.dpf_hand;
    J.block<3, 6>(3, 0) = e.dRf_hand[2];
  }
  return r;
}

/// The 6n-equation reach-FP system, in the order of the FP's contacts.
inline VecX reach_fp_residual(const SystemState& s, const DesignParams& d, const FPSpec& fp,
                              const ToolGeom& tool) {
  if (s.numContacts() != fp.numContacts())
    throw DomainError("state contact count does not match the FP");
  return contactResidual6(s, d, tool);
}

/// Full-rank form used by the solvers: 3 position equations and the normal
/// sum projected on the tool tangent plane, per contact (5n rows).
inline VecX reducedResidual(const SystemState& s, const DesignParams& d, const ToolGeom& tool,
                            const Transform& tool_pose = Transform::Identity(),
                            MatX* jac = nullptr) {
  const int n = s.numContacts();
  const auto ev = evaluateContacts(s, d, tool, tool_pose);
  VecX r(5 * n);
  if (jac) jac->setZero(5 * n, layout::dimension(n));
  for (int i = 0; i < n; ++i) {
    const ContactEval& e = ev[i];
    const Vec3 sum = e.Rt.col(2) + e.Rf.col(2);
    r.segment<3>(5 * i) = e.pt - e.pf;
    r[5 * i + 3] = e.Rt.col(0).dot(sum);
    r[5 * i + 4] = e.Rt.col(1).dot(sum);
    if (!jac) continue;
    auto J = jac->middleRows(5 * i, 5);
    const int ta = layout::toolA1(i);
    const int f = layout::fingerVar(n, i);
    J.block<3, 2>(0, ta) = e.dpt;
    J.block<3, 5>(0, f) = -e.dpf;
    J.block<3, 6>(0, 0) = -e.dpf_hand;
    for (int k = 0; k < 2; ++k) {
      const Vec3 t = e.Rt.col(k);
      J.block<1, 2>(3 + k, ta) = sum.transpose() * e.dRt[k] + t.transpose() * e.dRt[2];
      J.block<1, 5>(3 + k, f) = t.transpose() * e.dRf[2];
      J.block<1, 6>(3 + k, 0) = t.transpose() * e.dRf_hand[2];
    }
  }
  return r;
}

/// Gauss-Newton projection onto the contact manifold: repeated minimum-norm
/// corrections of the variables flagged in `free` (flattened-state mask).
/// Returns the final max-norm of the reduced residual.
inline double projectToContact(SystemState& s, const DesignParams& d, const ToolGeom& tool,
                               const Transform& tool_pose, const std::vector<char>& free,
                               double tol = 1e-12, int max_iter = 8) {
  std::vector<int> cols;
  for (int j = 0; j < static_cast<int>(free.size()); ++j)
    if (free[j]) cols.push_back(j);
  MatX J;
  double err = kDomainTol;
  for (int it = 0; it <= max_iter; ++it) {
    const VecX r = reducedResidual(s, d, tool, tool_pose, &J);
    err = r.cwiseAbs().maxCoeff();
    if (err < tol || it == max_iter) break;
    MatX Jf(J.rows(), static_cast<int>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) Jf.col(k) = J.col(cols[k]);
    const VecX dx = Jf.completeOrthogonalDecomposition().solve(-r);
    VecX x = s.flatten();
    for (std::size_t k = 0; k < cols.size(); ++k) x[cols[k]] += dx[k];
    s = SystemState::unflatten(x, s);
  }
  return err;
}

/// Canonical spin of a contact: angle of the finger Gauss x-axis in the tool
/// tangent frame.
inline double geometricSpin(const ContactEval& e) {
  return std::atan2(e.Rt.col(1).dot(e.Rf.col(0)), e.Rt.col(0).dot(e.Rf.col(0)));
}

/// Sets every contact's spin to its geometric value.
inline void syncSpins(SystemState& s, const DesignParams& d, const ToolGeom& tool,
                      const Transform& tool_pose = Transform::Identity()) {
  const auto ev = evaluateContacts(s, d, tool, tool_pose);
  for (int i = 0; i < s.numContacts(); ++i) s.contacts[i].tool.spin = geometricSpin(ev[i]);
}

// ---------------------------------------------------------------------------
// Tool rotation axis and cutting direction
// ---------------------------------------------------------------------------

/// Line the tool rotates about for an FP, evaluated at the FP state with the
/// tool at rest. carve: through the centroid of the contact points along the
/// tool x-axis; poke/press: through the two stationary contact points.
inline ToolMotion fpRotationAxis(const SystemState& s, const DesignParams& d, const FPSpec& fp,
                                 const ToolGeom& tool) {
  ToolMotion m;
  if (fp.axis_rule == AxisRule::carve_centroid) {
    Vec3 c = Vec3::Zero();
    for (const auto& cp : s.contacts) c += cylinderPatch(tool, cp.tool.a1, cp.tool.a2).p;
    m.center = c / s.numContacts();
    m.axis = Vec3::UnitX();
  } else {
    const auto st = fp.stationaryContacts();
    const Vec3 a = cylinderPatch(tool, s.contacts[st[0]].tool.a1, s.contacts[st[0]].tool.a2).p;
    const Vec3 b = cylinderPatch(tool, s.contacts[st[1]].tool.a1, s.contacts[st[1]].tool.a2).p;
    m.center = 0.5 * (a + b);
    const Vec3 ab = b - a;
    if (ab.norm() < 1e-12) throw DomainError("stationary pinch contacts coincide");
    m.axis = ab.normalized();
  }
  (void)d;
  return m;
}

/// Unit tangent of the tip's circular path for positive rotation.
inline Vec3 cutTangent(const ToolMotion& axis, const ToolGeom& tool) {
  const Vec3 lever = axis.pose() * tool.tip() - axis.center;
  const Vec3 t = axis.axis.cross(lever);
  if (t.norm() < 1e-12) throw DomainError("tool tip lies on the rotation axis");
  return t.normalized();
}

// ---------------------------------------------------------------------------
// Velocities
// ---------------------------------------------------------------------------

/// Linear map from (u_t_dot, joint rates of the moving contacts' fingers) to
/// the stacked velocity of {P} relative to {C}, expressed in {C}.
inline MatX contactVelocityJacobian(const std::vector<ContactEval>& ev, const FPSpec& fp,
                                    const ToolMotion& motion) {
  const int n = static_cast<int>(ev.size());
  const auto moving = fp.movingContacts();
  MatX J = MatX::Zero(3 * n, 1 + 3 * static_cast<int>(moving.size()));
  for (int i = 0; i < n; ++i) {
    const Mat3 RcT = ev[i].contactFrame().transpose();
    J.block<3, 1>(3 * i, 0) = -RcT * motion.axis.cross(ev[i].pt - motion.center);
  }
  for (std::size_t k = 0; k < moving.size(); ++k) {
    const int i = moving[k];
    J.block<3, 3>(3 * i, 1 + 3 * k) = ev[i].contactFrame().transpose() * ev[i].Jv;
  }
  return J;
}

inline constexpr double kStaleResidual = 1e-4;

/// J with v_CP = J [u_t_dot; u_f_dot]. Columns for stationary fingers are
/// omitted. Throws StaleStateError off the contact manifold.
inline MatX contact_jacobian(const SystemState& s, const DesignParams& d, const FPSpec& fp,
                             const ToolGeom& tool, const ToolMotion& motion) {
  const Transform pose = motion.pose();
  if (contactResidual6(s, d, tool, pose).norm() > kStaleResidual)
    throw StaleStateError("state is too far from the contact manifold");
  return contactVelocityJacobian(evaluateContacts(s, d, tool, pose), fp, motion);
}

struct ContactRates {
  Vec2 tool = Vec2::Zero();    // (a_t1_dot, a_t2_dot)
  double spin = 0.0;
  Vec2 finger = Vec2::Zero();  // (a_f1_dot, a_f2_dot)
};

/// Distance from the cap pole, in rad of the cap, below which the spherical
/// chart is singular.
inline constexpr double kPoleGuard = 0.05;

/// First-order roll-slide kinematics of one contact. v_rel and w_rel are the
/// linear velocity of the finger contact point and the angular velocity of
/// the finger link, both relative to the tool and expressed in {O}.
inline ContactRates rollSlideRates(const ContactEval& e, const Vec3& v_rel, const Vec3& w_rel) {
  if (e.finger_a1 > e.finger_domain_end - kPoleGuard * e.finger_radius)
    throw SingularityError("contact at the fingertip pole");
  const Vec3 xt = e.Rt.col(0), yt = e.Rt.col(1), zt = e.Rt.col(2);
  const Vec2 vs(xt.dot(v_rel), yt.dot(v_rel));
  const Vec2 w(-yt.dot(w_rel), xt.dot(w_rel));
  Mat2 Q;
  Q << xt.dot(e.Rf.col(0)), xt.dot(e.Rf.col(1)), yt.dot(e.Rf.col(0)), yt.dot(e.Rf.col(1));
  const Mat2 Kf_t = Q * e.Kf * Q.transpose();
  const Mat2 Ksum = e.Kt + Kf_t;
  if (std::abs(Ksum.determinant()) < 1e-12 * std::max(1.0, Ksum.squaredNorm()))
    throw SingularityError("relative curvature is singular");
  const Vec2 B = Ksum.fullPivLu().solve(w - e.Kt * vs);
  const Vec2 A = B + vs;
  ContactRates r;
  r.tool = e.Mt.fullPivLu().solve(A);
  r.finger = e.Mf.fullPivLu().solve(Q.transpose() * B);
  r.spin = w_rel.dot(zt) - (e.Tf * e.Mf * r.finger)(0) - (e.Tt * e.Mt * r.tool)(0);
  return r;
}

/// Coordinate rates of every contact for the tool turning at u_t_dot about
/// `motion` and the moving fingers at `finger_rates` (3 per moving contact,
/// in the order of fp.movingContacts()). Stationary fingers are at rest.
inline std::vector<ContactRates> contact_evolution(const SystemState& s, const DesignParams& d,
                                                   const FPSpec& fp, const ToolGeom& tool,
                                                   const ToolMotion& motion, double u_t_dot,
                                                   const VecX& finger_rates) {
  const auto ev = evaluateContacts(s, d, tool, motion.pose());
  const auto moving = fp.movingContacts();
  if (finger_rates.size() != 3 * static_cast<int>(moving.size()))
    throw DomainError("finger rate vector has the wrong size");
  std::vector<ContactRates> out(ev.size());
  for (int i = 0; i < s.numContacts(); ++i) {
    Vec3 v = -u_t_dot * motion.axis.cross(ev[i].pt - motion.center);
    Vec3 w = -u_t_dot * motion.axis;
    for (std::size_t k = 0; k < moving.size(); ++k) {
      if (moving[k] != i) continue;
      const Vec3 ud = finger_rates.segment<3>(3 * k);
      v += ev[i].Jv * ud;
      w += ev[i].Jw * ud;
    }
    out[i] = rollSlideRates(ev[i], v, w);
  }
  return out;
}

}  // namespace toolhand
