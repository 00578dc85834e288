#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Each returns the worst error over a random batch.

#include <Eigen/Eigenvalues>
#include <cstdint>
#include <random>
#include <vector>

#include "test_util.hpp"
#include "toolhand/contact.hpp"
#include "toolhand/mechanics.hpp"
#include "toolhand/solve.hpp"

namespace toolhand::test {

inline DesignParams randomDesign(std::mt19937_64& rng) {
  const DesignBounds b;
  Vec6 v;
  for (int i = 0; i < 6; ++i) v[i] = uniform(rng, b.lo[i], b.hi[i]);
  return DesignParams::fromVector(v);
}

/// Places the hand so that one finger touches the tool at the given coordinates.
inline SystemState touching(const DesignParams& d, const ToolGeom& tool, int finger, const FingerJoints& u,
                            double fa1, double fa2, double ta1, double ta2, double twist = 0.7) {
  // finger x-axis turned by `twist` from the tool x-axis; parallel cylinders
  // would give a line contact
  const Transform T_OC = cylinder_frame(tool, {ta1, ta2, twist});
  const Transform T_HP = fingerRootTransform(d, finger) * finger_fk(d, u, {fa1, fa2, 0.0});
  const Transform T_OH = T_OC * makeTransform(rotX(kPi), Vec3::Zero()) * T_HP.inverse();
  SystemState s;
  s.hand = {T_OH.translation(), logSO3(T_OH.linear())};
  s.contacts.push_back({finger, {ta1, ta2, twist}, u, fa1, fa2});
  return s;
}

inline FPSpec singleContactFP() {
  FPSpec fp;
  fp.contacts = {{0, true, -1}};
  fp.theta_lo = VecX::Constant(layout::dimension(1), -1e9);
  fp.theta_hi = VecX::Constant(layout::dimension(1), 1e9);
  return fp;
}

inline SystemState randomState(std::mt19937_64& rng, const DesignParams& d, const FPSpec& fp) {
  SystemState s;
  s.hand = {Vec3(uniform(rng, -30, 30), uniform(rng, 20, 60), uniform(rng, -20, 40)),
            Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1))};
  const double end = capsuleDomainEnd(d.finger_radius, d.distalBodyLength());
  for (const auto& role : fp.contacts) {
    ContactPair c;
    c.finger = role.finger;
    c.tool = {uniform(rng, 10, 140), uniform(rng, -kPi, kPi), uniform(rng, -kPi, kPi)};
    c.joints = {uniform(rng, -0.4, 1.5), uniform(rng, -0.4, 0.4), uniform(rng, 0.1, 1.7)};
    c.finger_a1 = uniform(rng, 1.0, end - 1.0);
    c.finger_a2 = uniform(rng, -kPi, kPi);
    s.contacts.push_back(c);
  }
  return s;
}

// --- Jacobians vs central differences ---------------------------------------

/// Fingertip contact point and normal over joints and surface coordinates.
inline double worstFingerJacobianError(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const DesignParams d = randomDesign(rng);
    const double end = capsuleDomainEnd(d.finger_radius, d.distalBodyLength());
    VecX x(5);
    x << uniform(rng, -0.5, 1.6), uniform(rng, -0.5, 0.5), uniform(rng, 0.0, 1.8), uniform(rng, 0.5, end - 0.5),
        uniform(rng, -kPi, kPi);
    const auto point = [&](const VecX& v) -> VecX { return fingerContact(d, {v[0], v[1], v[2]}, v[3], v[4]).p; };
    const auto normal = [&](const VecX& v) -> VecX {
      return fingerContact(d, {v[0], v[1], v[2]}, v[3], v[4]).R.col(2);
    };
    const FingerContactKinematics fk = fingerContact(d, {x[0], x[1], x[2]}, x[3], x[4]);
    MatX Jp(3, 5), Jn(3, 5);
    Jp << fk.dp_du, fk.dp_da;
    for (int j = 0; j < 3; ++j) Jn.col(j) = fk.dR_du[j].col(2);
    Jn.rightCols(2) = fk.dcols_da[2];
    const double sp = std::max(1.0, Jp.norm());
    worst = std::max(worst, (Jp - numericJacobian(point, x)).cwiseAbs().maxCoeff() / sp);
    worst = std::max(worst, relativeError(Jn, numericJacobian(normal, x)));
  }
  return worst;
}

/// Six-row and reduced five-row contact residuals over the flattened state.
inline double worstResidualJacobianError(std::uint64_t seed, int trials) {
  const ToolGeom tool;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    DesignParams d;
    d.distal_length = uniform(rng, 30, 70);
    d.palm_angle = uniform(rng, -0.6, 0.6);
    d.thumb_angle = uniform(rng, 0.3, 1.5);
    const FPSpec fp = makeTopology(static_cast<FPKind>(k % kNumFPs));
    const SystemState s = randomState(rng, d, fp);
    MatX J6, J5;
    contactResidual6(s, d, tool, Transform::Identity(), &J6);
    reducedResidual(s, d, tool, Transform::Identity(), &J5);
    const auto f6 = [&](const VecX& v) { return contactResidual6(SystemState::unflatten(v, s), d, tool); };
    const auto f5 = [&](const VecX& v) { return reducedResidual(SystemState::unflatten(v, s), d, tool); };
    const VecX x = s.flatten();
    worst = std::max(worst, relativeError(J6, numericJacobian(f6, x)));
    worst = std::max(worst, relativeError(J5, numericJacobian(f5, x)));
  }
  return worst;
}

/// Contact velocity Jacobian against the time derivative of the contact
/// position residual with surface coordinates held fixed.
inline double worstContactJacobianError(std::uint64_t seed, int trials) {
  const DesignParams d;
  const ToolGeom tool;
  std::mt19937_64 rng(seed);
  const FPSpec fp = singleContactFP();
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const SystemState s = touching(d, tool, 0, {uniform(rng, 0, 1.2), uniform(rng, -0.3, 0.3), uniform(rng, 0.2, 1.5)},
                                   uniform(rng, 5, 40), uniform(rng, -2, 2), uniform(rng, 10, 140),
                                   uniform(rng, -kPi, kPi));
    const ToolMotion m{Vec3(0, 0, 75), Vec3::UnitX(), 0.0};
    const MatX J = contact_jacobian(s, d, fp, tool, m);
    const Mat3 Rc = cylinder_frame(tool, s.contacts[0].tool).linear();
    const auto f = [&](const VecX& q) -> VecX {
      SystemState t = s;
      t.contacts[0].joints = FingerJoints::fromVector(q.tail<3>());
      ToolMotion mm = m;
      mm.angle = q[0];
      return contactResidual6(t, d, tool, mm.pose()).head<3>();
    };
    VecX q(4);
    q << 0.0, s.contacts[0].joints.vector();
    worst = std::max(worst, relativeError(-Rc * J, numericJacobian(f, q)));
  }
  return worst;
}

/// Clearance gradients over the flattened state and the tool angle.
inline double worstCollisionGradientError(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  const ToolGeom tool;
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    DesignParams d;
    d.palm_angle = uniform(rng, -0.5, 0.5);
    d.thumb_angle = uniform(rng, 0.4, 1.4);
    const FPSpec fp = makeTopology(static_cast<FPKind>(k % kNumFPs));
    SystemState s;
    s.hand = {Vec3(uniform(rng, -20, 20), uniform(rng, 10, 30), uniform(rng, -60, 0)),
              Vec3(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5))};
    for (const auto& c : fp.contacts)
      s.contacts.push_back({c.finger, {50, 0, 0},
                            {uniform(rng, 0, 1.5), uniform(rng, -0.4, 0.4), uniform(rng, 0.1, 1.7)}, 10, 0});
    const ToolMotion m{Vec3(0, 0, 60), Vec3(1, 0.3, 0).normalized(), uniform(rng, -0.3, 0.3)};
    const auto rep = collision_values(s, d, fp, tool, 1.0, m, true);
    const auto f = [&](const VecX& v) {
      return collision_values(SystemState::unflatten(v, s), d, fp, tool, 1.0, m).clearance;
    };
    const MatX fd = numericJacobian(f, s.flatten());
    const auto fphi = [&](const VecX& a) {
      ToolMotion mm = m;
      mm.angle = a[0];
      return collision_values(s, d, fp, tool, 1.0, mm).clearance;
    };
    const MatX fdphi = numericJacobian(fphi, VecX::Constant(1, m.angle));
    for (int r = 0; r < rep.clearance.size(); ++r) {
      if (rep.clearance[r] < -2.0 * d.finger_radius) continue;  // segments may cross
      worst = std::max(worst, (rep.gradient.row(r) - fd.row(r)).cwiseAbs().maxCoeff() /
                                  std::max(1.0, fd.row(r).cwiseAbs().maxCoeff()));
      worst = std::max(worst, std::abs(rep.gradient_phi[r] - fdphi(r, 0)) / std::max(1.0, std::abs(fdphi(r, 0))));
    }
  }
  return worst;
}

// --- segment distance -------------------------------------------------------

/// Distance between two segments by nested ternary search of the squared
/// distance, which is convex in both segment parameters, plus a coarse grid.
inline double segmentDistanceOracle(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  const auto f = [&](double s, double t) { return ((p1 + s * (q1 - p1)) - (p2 + t * (q2 - p2))).squaredNorm(); };
  const auto ternary = [](const auto& g) {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 50; ++it) {
      const double a = lo + (hi - lo) / 3.0, b = hi - (hi - lo) / 3.0;
      if (g(a) <= g(b)) hi = b;
      else lo = a;
    }
    return g(0.5 * (lo + hi));
  };
  const auto minOverT = [&](double s) { return ternary([&](double t) { return f(s, t); }); };
  double best = ternary(minOverT);
  constexpr int kGrid = 16;
  for (int i = 0; i <= kGrid; ++i)
    for (int j = 0; j <= kGrid; ++j) best = std::min(best, f(static_cast<double>(i) / kGrid, static_cast<double>(j) / kGrid));
  return std::sqrt(best);
}

/// Random segment pairs: general position, near-parallel, and degenerate.
inline double worstSegmentDistanceError(std::uint64_t seed, int pairs) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  const auto pt = [&] { return Vec3(uniform(rng, -20, 20), uniform(rng, -20, 20), uniform(rng, -20, 20)); };
  for (int k = 0; k < pairs; ++k) {
    const Vec3 p1 = pt(), q1 = pt(), p2 = pt();
    Vec3 q2 = pt();
    if (k % 4 == 1) q2 = p2 + (q1 - p1) * uniform(rng, -1.5, 1.5) + 1e-6 * pt();
    if (k % 8 == 3) q2 = p2;
    const double d = segment_distance(p1, q1, p2, q2).distance;
    worst = std::max(worst, std::abs(d - segmentDistanceOracle(p1, q1, p2, q2)));
  }
  return worst;
}

// --- QP ---------------------------------------------------------------------

/// Accelerated projected gradient on a box.
inline double projectedGradientObjective(const QPProblem& p) {
  const int n = p.numVars();
  Eigen::SelfAdjointEigenSolver<MatX> es(p.H);
  const double L = std::max(es.eigenvalues().maxCoeff(), 1e-12);
  const auto proj = [&](const VecX& v) { return v.cwiseMax(p.lb).cwiseMin(p.ub).eval(); };
  VecX x = proj(VecX::Zero(n)), y = x;
  double t = 1.0;
  for (int k = 0; k < 200000; ++k) {
    const VecX xn = proj(y - (p.H * y + p.g) / L);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = xn + ((t - 1.0) / tn) * (xn - x);
    x = xn;
    t = tn;
  }
  return 0.5 * x.dot(p.H * x) + p.g.dot(x);
}

inline MatX randomPSD(std::mt19937_64& rng, int n, int rank) {
  MatX A(rank, n);
  for (int i = 0; i < rank; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = uniform(rng, -1, 1);
  return A.transpose() * A;
}

/// Box-constrained convex QP; every third problem has a singular Hessian.
inline QPProblem randomBoxQP(std::mt19937_64& rng, int k) {
  const int n = 2 + static_cast<int>(rng() % 19);
  const int rank = k % 3 == 0 ? std::max(1, n - 2) : n + 2;
  QPProblem p;
  p.H = randomPSD(rng, n, rank) + 0.05 * MatX::Identity(n, n) * (k % 3 == 0 ? 0.0 : 1.0);
  p.g.resize(n);
  p.lb.resize(n);
  p.ub.resize(n);
  for (int i = 0; i < n; ++i) {
    p.g[i] = uniform(rng, -3, 3);
    p.lb[i] = uniform(rng, -2, 0);
    p.ub[i] = p.lb[i] + uniform(rng, 0.1, 2.0);
  }
  return p;
}

/// Largest objective gap between solve_qp and projected gradient; +inf if a
/// solve fails.
inline double worstQPGap(std::uint64_t seed, int problems) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int k = 0; k < problems; ++k) {
    const QPProblem p = randomBoxQP(rng, k);
    QPOptions o;
    o.max_iter = 1000;
    const QPResult r = solve_qp(p, o);
    if (r.status != QPStatus::optimal) return kInf;
    worst = std::max(worst, std::abs(r.objective - projectedGradientObjective(p)));
  }
  return worst;
}

// --- Statics ----------------------------------------------------------------

/// Contact on a planar body: point p, inward normal n in the x-y plane.
inline ContactEval planarContact(const Vec3& p, const Vec3& n) {
  ContactEval e;
  e.pt = p;
  const Vec3 z = n.normalized(), x = Vec3::UnitZ();
  e.Rt.col(0) = x;
  e.Rt.col(1) = z.cross(x);
  e.Rt.col(2) = z;
  return e;
}

/// Three-contact grasps around the z axis loaded at a tip on that axis, with
/// no minimum normal force. For every grasp feasible at 10 N, returns the
/// worst deviation of the 5 N forces from half the 10 N forces (+inf if the
/// 5 N load is infeasible); `feasible` counts those grasps.
inline double worstStaticsLinearityError(std::uint64_t seed, int trials, int* feasible) {
  std::mt19937_64 rng(seed);
  FrictionModel fr;
  fr.f_normal_min = 0.0;
  double worst = 0.0;
  *feasible = 0;
  for (int k = 0; k < trials; ++k) {
    std::vector<ContactEval> ev;
    for (int i = 0; i < 3; ++i) {
      const double a = 2.0 * kPi * i / 3.0 + uniform(rng, -0.3, 0.3);
      ev.push_back(planarContact(Vec3(10 * std::cos(a), 10 * std::sin(a), uniform(rng, -5, 5)),
                                 -Vec3(std::cos(a), std::sin(a), 0)));
    }
    const Vec3 tip(0, 0, 40);
    const Vec3 F = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), 0).normalized();
    const auto big = detail::equilibriumQP(ev, tip, 10.0 * F, fr);
    if (!big.feasible) continue;
    ++*feasible;
    const auto half = detail::equilibriumQP(ev, tip, 5.0 * F, fr);
    if (!half.feasible) return kInf;
    for (int i = 0; i < 3; ++i) worst = std::max(worst, (half.forces[i] - 0.5 * big.forces[i]).norm());
  }
  return worst;
}

// --- Pareto -----------------------------------------------------------------

inline std::vector<int> bruteForceFront(const std::vector<std::vector<double>>& rows) {
  std::vector<int> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < rows.size() && !dominated; ++j) {
      if (i == j) continue;
      bool ge = true, gt = false;
      for (std::size_t k = 0; k < rows[i].size(); ++k) {
        ge = ge && rows[j][k] >= rows[i][k];
        gt = gt || rows[j][k] > rows[i][k];
      }
      dominated = ge && gt;
    }
    if (!dominated) out.push_back(static_cast<int>(i));
  }
  return out;
}

inline std::vector<std::vector<double>> randomRows(std::mt19937_64& rng, int n, int cols, int levels) {
  std::uniform_int_distribution<int> U(0, levels);
  std::vector<std::vector<double>> rows(n, std::vector<double>(cols));
  for (auto& r : rows)
    for (auto& v : r) v = 100.0 * U(rng) / levels;
  return rows;
}

}  // namespace toolhand::test
