#pragma once

// Parametric geometry of the tool and the hand: design template, surface
// parametrizations (Gauss frames), finger and hand forward kinematics, and
// the standardized design space.

#include <array>
#include <stdexcept>
#include <string>

#include "toolhand/math.hpp"

namespace toolhand {

/// Total finger length from MCP joint to the distal tip, in mm.
inline constexpr double kTotalFingerLength = 100.0;
inline constexpr int kNumFingers = 4;

/// Raised for inputs outside a parametric or design domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by standardize() for designs outside the design box.
class OutOfBoundsError : public DomainError {
 public:
  using DomainError::DomainError;
};

enum class Finger : int { index = 0, middle = 1, ring = 2, thumb = 3 };

inline const char* fingerName(int f) {
  static constexpr const char* kNames[kNumFingers] = {"index", "middle", "ring", "thumb"};
  return kNames[f];
}

/// Six design parameters of the hand template. Lengths in mm, angles in rad.
struct DesignParams {
  double distal_length = 40.0;    // d1
  double palm_length = 80.0;      // d2
  double palm_half_width = 25.0;  // d3
  double finger_radius = 8.0;     // d4
  double palm_angle = 0.0;        // d5
  double thumb_angle = 0.9;       // d6

  double proximalLength() const { return kTotalFingerLength - distal_length; }
  /// Length of the cylindrical body of the distal capsule (the cap adds one radius).
  double distalBodyLength() const { return distal_length - finger_radius; }

  Vec6 vector() const {
    Vec6 v;
    v << distal_length, palm_length, palm_half_width, finger_radius, palm_angle, thumb_angle;
    return v;
  }
  static DesignParams fromVector(const Vec6& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }
  bool operator==(const DesignParams&) const = default;
};

/// Throws DomainError when the template cannot be built from `d`.
inline void validateDesign(const DesignParams& d) {
  if (!(d.distal_length > 0.0 && d.distal_length < kTotalFingerLength))
    throw DomainError("distal length must lie in (0, L_tot)");
  if (!(d.finger_radius > 0.0)) throw DomainError("finger radius must be positive");
  if (!(d.palm_half_width > d.finger_radius))
    throw DomainError("palm half width must exceed the finger radius");
  if (!(d.distal_length > d.finger_radius))
    throw DomainError("distal link shorter than its tip cap");
}

struct DesignBounds {
  Vec6 lo = (Vec6() << 30.0, 40.0, 15.0, 5.0, -0.6, 0.3).finished();
  Vec6 hi = (Vec6() << 70.0, 110.0, 45.0, 12.0, 0.6, 1.5).finished();

  bool contains(const DesignParams& d, double tol = 1e-12) const {
    const Vec6 v = d.vector();
    return ((v - lo).array() >= -tol).all() && ((hi - v).array() >= -tol).all();
  }
};

/// Affine map of the design box onto [-0.5, 0.5]^6.
inline Vec6 standardize(const DesignParams& d, const DesignBounds& b) {
  if (!((b.hi - b.lo).array() > 0.0).all()) throw DomainError("degenerate design bounds");
  if (!b.contains(d)) throw OutOfBoundsError("design parameters outside the design bounds");
  return ((d.vector() - b.lo).array() / (b.hi - b.lo).array() - 0.5).matrix();
}

inline DesignParams destandardize(const Vec6& s, const DesignBounds& b) {
  return DesignParams::fromVector(
      (b.lo.array() + (s.array() + 0.5) * (b.hi - b.lo).array()).matrix());
}

/// Cylindrical tool along +z of {O}, from z = 0 to z = length.
struct ToolGeom {
  double radius = 5.0;
  double length = 150.0;
  double tip_offset = 150.0;  // axial coordinate of the cutting tip

  void validate() const {
    if (!(radius > 0.0)) throw DomainError("tool radius must be positive");
    if (!(tip_offset > 0.0 && tip_offset <= length))
      throw DomainError("tool tip offset must lie in (0, length]");
  }
  Vec3 tip() const { return {0.0, 0.0, tip_offset}; }
};

/// Coordinates of a point on a surface plus the spin of the contact frame
/// about the inward normal.
struct SurfaceCoords {
  double a1 = 0.0;
  double a2 = 0.0;
  double spin = 0.0;
  bool operator==(const SurfaceCoords&) const = default;
};

struct FingerJoints {
  double mcp_flex = 0.0;
  double mcp_abd = 0.0;
  double ip_flex = 0.0;

  Vec3 vector() const { return {mcp_flex, mcp_abd, ip_flex}; }
  static FingerJoints fromVector(const Vec3& v) { return {v[0], v[1], v[2]}; }
  bool operator==(const FingerJoints&) const = default;
};

struct JointLimits {
  Vec3 lo = Vec3(-0.5, -0.5, 0.0);
  Vec3 hi = Vec3(1.6, 0.5, 1.8);

  bool contains(const FingerJoints& u, double tol = 1e-12) const {
    const Vec3 v = u.vector();
    return ((v - lo).array() >= -tol).all() && ((hi - v).array() >= -tol).all();
  }
};

/// Pose of the hand frame {H} in the tool frame {O}: translation (mm) and
/// rotation vector (rad).
struct HandPose {
  Vec3 translation = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();

  Vec6 vector() const {
    Vec6 v;
    v << translation, rotation;
    return v;
  }
  static HandPose fromVector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Transform transform() const { return makeTransform(expSO3(rotation), translation); }
};

// ---------------------------------------------------------------------------
// Surfaces
// ---------------------------------------------------------------------------

/// Local geometry of a parametrized surface at one point. The frame R holds
/// the Gauss frame (x, y, z) as columns with z the inward normal; d* are
/// partials with respect to (a1, a2). metric/curvature/torsion are the local
/// forms used by first-order contact kinematics, defined by
///   dp = [x y] M da,   dz = -[x y] K M da,   dx . y = T M da.
struct SurfacePatch {
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Mat32 dp = Mat32::Zero();
  Mat32 dx = Mat32::Zero();
  Mat32 dy = Mat32::Zero();
  Mat32 dz = Mat32::Zero();
  Mat2 metric = Mat2::Identity();
  Mat2 curvature = Mat2::Zero();
  Eigen::RowVector2d torsion = Eigen::RowVector2d::Zero();

  Vec3 x() const { return R.col(0); }
  Vec3 y() const { return R.col(1); }
  Vec3 z() const { return R.col(2); }
};

namespace detail {

inline SurfacePatch cylinderBodyPatch(double r, double a1, double a2) {
  const double c = std::cos(a2), s = std::sin(a2);
  SurfacePatch sp;
  sp.p = Vec3(r * c, r * s, a1);
  const Vec3 x(0.0, 0.0, 1.0), y(-s, c, 0.0), z(-c, -s, 0.0);
  sp.R.col(0) = x;
  sp.R.col(1) = y;
  sp.R.col(2) = z;
  sp.dp.col(0) = x;
  sp.dp.col(1) = r * y;
  sp.dy.col(1) = z;
  sp.dz.col(1) = -y;
  sp.metric = Vec2(1.0, r).asDiagonal();
  sp.curvature = Vec2(0.0, 1.0 / r).asDiagonal();
  return sp;
}

}  // namespace detail

inline constexpr double kDomainTol = 1e-9;

/// Cylinder of the tool: a1 axial in [0, length], a2 circumferential.
inline SurfacePatch cylinderPatch(const ToolGeom& tool, double a1, double a2) {
  if (a1 < -kDomainTol || a1 > tool.length + kDomainTol)
    throw DomainError("tool axial coordinate outside [0, length]");
  return detail::cylinderBodyPatch(tool.radius, a1, a2);
}

inline double capsuleDomainEnd(double radius, double body_length) {
  return body_length + 0.5 * kPi * radius;
}

/// Capsule along +z: a cylindrical body on [0, body_length] and a distal
/// hemispherical cap parametrized by arc length beyond it.
inline SurfacePatch capsulePatch(double r, double body_length, double a1, double a2) {
  if (a1 < -kDomainTol || a1 > capsuleDomainEnd(r, body_length) + kDomainTol)
    throw DomainError("capsule coordinate outside the body/cap domain");
  if (a1 <= body_length) {
    SurfacePatch sp = detail::cylinderBodyPatch(r, a1, a2);
    return sp;
  }
  const double b = (a1 - body_length) / r;
  const double cb = std::cos(b), sb = std::sin(b);
  const double ca = std::cos(a2), sa = std::sin(a2);
  SurfacePatch sp;
  sp.p = Vec3(r * cb * ca, r * cb * sa, body_length + r * sb);
  const Vec3 x(-sb * ca, -sb * sa, cb), y(-sa, ca, 0.0), z(-cb * ca, -cb * sa, -sb);
  sp.R.col(0) = x;
  sp.R.col(1) = y;
  sp.R.col(2) = z;
  sp.dp.col(0) = x;
  sp.dp.col(1) = r * cb * y;
  sp.dx.col(0) = z / r;
  sp.dx.col(1) = -sb * y;
  sp.dy.col(1) = Vec3(-ca, -sa, 0.0);
  sp.dz.col(0) = -x / r;
  sp.dz.col(1) = -cb * y;
  sp.metric = Vec2(1.0, r * cb).asDiagonal();
  sp.curvature = Mat2::Identity() / r;
  sp.torsion = Eigen::RowVector2d(0.0, cb > 1e-300 ? -sb / (r * cb) : -1e300);
  return sp;
}

inline Mat3 withSpin(const Mat3& gauss, double spin) { return gauss * rotZ(spin); }

/// T_OC: Gauss frame of the tool surface, post-rotated about z by the spin.
inline Transform cylinder_frame(const ToolGeom& tool, const SurfaceCoords& c) {
  const SurfacePatch sp = cylinderPatch(tool, c.a1, c.a2);
  return makeTransform(withSpin(sp.R, c.spin), sp.p);
}

inline Transform capsule_frame(double radius, double body_length, const SurfaceCoords& c) {
  const SurfacePatch sp = capsulePatch(radius, body_length, c.a1, c.a2);
  return makeTransform(withSpin(sp.R, c.spin), sp.p);
}

// ---------------------------------------------------------------------------
// Fingers
// ---------------------------------------------------------------------------

/// T_HR: root frame of finger `f` on the palm. Non-thumb roots sit on the
/// distal palm edge at lateral offsets -d3, 0, +d3 with their mount tilted by
/// the palm angle about the lateral axis; the thumb sits at the proximal
/// corner next to the index finger, turned by the thumb angle about the palm
/// normal. Fingers extend along their local +z and flex toward -y.
inline Transform fingerRootTransform(const DesignParams& d, int f) {
  if (f == static_cast<int>(Finger::thumb))
    return makeTransform(rotY(d.thumb_angle - 0.5 * kPi), Vec3(-d.palm_half_width, 0.0, 0.0));
  const double x = (f - 1) * d.palm_half_width;
  return makeTransform(rotX(d.palm_angle), Vec3(x, 0.0, d.palm_length));
}

/// Key points of one finger in its root frame {R}.
struct FingerLinkPoints {
  Vec3 root = Vec3::Zero();
  Vec3 ip = Vec3::Zero();
  Vec3 tip = Vec3::Zero();  // centre of the distal cap
  Mat3 dip = Mat3::Zero();  // d ip / d joints
  Mat3 dtip = Mat3::Zero();
};

inline FingerLinkPoints fingerLinks(const DesignParams& d, const FingerJoints& u) {
  const Mat3 R1 = rotX(u.mcp_flex);
  const Mat3 Rp = R1 * rotY(u.mcp_abd);
  const Mat3 Rd = Rp * rotX(u.ip_flex);
  FingerLinkPoints fl;
  fl.ip = Rp * Vec3(0.0, 0.0, d.proximalLength());
  fl.tip = fl.ip + Rd * Vec3(0.0, 0.0, d.distalBodyLength());
  const Vec3 w1 = Vec3::UnitX(), w2 = R1 * Vec3::UnitY(), w3 = Rp * Vec3::UnitX();
  fl.dip.col(0) = w1.cross(fl.ip);
  fl.dip.col(1) = w2.cross(fl.ip);
  fl.dtip.col(0) = w1.cross(fl.tip);
  fl.dtip.col(1) = w2.cross(fl.tip);
  fl.dtip.col(2) = w3.cross(fl.tip - fl.ip);
  return fl;
}

/// Contact point on the distal capsule of a finger, in the finger root frame,
/// with partials with respect to the joints (u1, u2, u3) and surface
/// coordinates (a1, a2). Joint partials of p are the body-fixed point
/// velocity Jacobian; `axes` holds the joint angular-velocity Jacobian.
struct FingerContactKinematics {
  SurfacePatch local;  // patch in the distal link frame
  Mat3 link_rotation = Mat3::Identity();
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();  // Gauss frame in {R}
  Mat3 dp_du = Mat3::Zero();
  Mat32 dp_da = Mat32::Zero();
  std::array<Mat3, 3> dR_du{};  // d(frame columns) / du_j
  std::array<Mat32, 3> dcols_da{};  // dx, dy, dz w.r.t. (a1, a2), in {R}
  Mat3 axes = Mat3::Zero();
};

inline FingerContactKinematics fingerContact(const DesignParams& d, const FingerJoints& u,
                                             double a1, double a2) {
  FingerContactKinematics k;
  k.local = capsulePatch(d.finger_radius, d.distalBodyLength(), a1, a2);
  const Mat3 R1 = rotX(u.mcp_flex);
  const Mat3 Rp = R1 * rotY(u.mcp_abd);
  const Mat3 Rd = Rp * rotX(u.ip_flex);
  const Vec3 o_ip = Rp * Vec3(0.0, 0.0, d.proximalLength());
  k.link_rotation = Rd;
  k.p = o_ip + Rd * k.local.p;
  k.R = Rd * k.local.R;
  k.axes.col(0) = Vec3::UnitX();
  k.axes.col(1) = R1 * Vec3::UnitY();
  k.axes.col(2) = Rp * Vec3::UnitX();
  const std::array<Vec3, 3> origins = {Vec3::Zero(), Vec3::Zero(), o_ip};
  for (int j = 0; j < 3; ++j) {
    const Vec3 w = k.axes.col(j);
    k.dp_du.col(j) = w.cross(k.p - origins[j]);
    for (int c = 0; c < 3; ++c) k.dR_du[j].col(c) = w.cross(k.R.col(c));
  }
  k.dp_da = Rd * k.local.dp;
  k.dcols_da[0] = Rd * k.local.dx;
  k.dcols_da[1] = Rd * k.local.dy;
  k.dcols_da[2] = Rd * k.local.dz;
  return k;
}

/// T_RP: contact frame on the distal link of a finger relative to its root.
inline Transform finger_fk(const DesignParams& d, const FingerJoints& u, const SurfaceCoords& c) {
  const FingerContactKinematics k = fingerContact(d, u, c.a1, c.a2);
  return makeTransform(withSpin(k.R, c.spin), k.p);
}

// ---------------------------------------------------------------------------
// Hand
// ---------------------------------------------------------------------------

struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 0.0;
};

/// Link capsules of all fingers expressed in {O}. capsules[2f] is the
/// proximal link of finger f and capsules[2f + 1] its distal link (segment
/// from the IP joint to the cap centre).
struct HandGeometry {
  Transform palm = Transform::Identity();  // T_OH
  std::array<Transform, kNumFingers> roots{};
  std::array<Capsule, 2 * kNumFingers> capsules{};
};

inline HandGeometry hand_fk(const DesignParams& d, const HandPose& pose,
                            const std::array<FingerJoints, kNumFingers>& joints) {
  HandGeometry g;
  g.palm = pose.transform();
  for (int f = 0; f < kNumFingers; ++f) {
    g.roots[f] = g.palm * fingerRootTransform(d, f);
    const FingerLinkPoints fl = fingerLinks(d, joints[f]);
    g.capsules[2 * f] = {g.roots[f] * fl.root, g.roots[f] * fl.ip, d.finger_radius};
    g.capsules[2 * f + 1] = {g.roots[f] * fl.ip, g.roots[f] * fl.tip, d.finger_radius};
  }
  return g;
}

}  // namespace toolhand
