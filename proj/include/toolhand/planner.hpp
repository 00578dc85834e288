#pragma once

// Tool-wielding paths from a foundational pose. The tool turns at a
// prescribed rate about the FP rotation axis while the hand base stays
// fixed; each step solves a minimum-sliding QP for the moving fingers'
// joint rates, checks static equilibrium against a cutting force that
// opposes the motion, and integrates joints and contact coordinates with RK4.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "toolhand/contact.hpp"
#include "toolhand/fp.hpp"
#include "toolhand/mechanics.hpp"
#include "toolhand/solve.hpp"

namespace toolhand {

struct PlanConfig {
  double u_t_dot = 0.2;  // rad/s
  double dt = 0.02;      // s
  int max_steps = 500;
  int direction = 1;
  double tip_force = 10.0;  // N
  double collision_margin = 1.0;
  int hold_steps = 3;          // consecutive steps held at a joint bound
  double hold_factor = 10.0;   // sliding objective above this multiple of the path median
  double projection_tol = 1e-9;
  double clearance_slack = 0.1;  // mm a step may undercut the linearized clearances

  void validate() const {
    if (!(u_t_dot > 0.0)) throw DomainError("u_t_dot must be positive");
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    if (max_steps < 0) throw DomainError("max_steps must be non-negative");
    if (direction != 1 && direction != -1) throw DomainError("direction must be +1 or -1");
    if (hold_steps < 1) throw DomainError("hold_steps must be positive");
    if (!(clearance_slack >= 0.0)) throw DomainError("clearance_slack must be non-negative");
  }
};

enum class Termination { qp_failure, equilibrium_infeasible, joint_limit, max_steps, singularity };

inline const char* toString(Termination t) {
  switch (t) {
    case Termination::qp_failure: return "qp_failure";
    case Termination::equilibrium_infeasible: return "equilibrium_infeasible";
    case Termination::joint_limit: return "joint_limit";
    case Termination::max_steps: return "max_steps";
    case Termination::singularity: return "singularity";
  }
  return "?";
}

inline std::optional<Termination> parseTermination(std::string_view s) {
  for (auto t : {Termination::qp_failure, Termination::equilibrium_infeasible, Termination::joint_limit,
                 Termination::max_steps, Termination::singularity})
    if (s == toString(t)) return t;
  return std::nullopt;
}

/// Everything the model needs besides the FP and the design.
struct PlanContext {
  ToolGeom tool;
  JointLimits limits;
  FrictionModel friction;
};

struct StepRecord {
  double phi = 0.0;
  SystemState state;
  VecX rates;                   // joint rates of the moving fingers
  std::vector<double> sliding;  // tangential sliding speed per contact, mm/s
  double objective = 0.0;       // sum of squared sliding speeds
  bool equilibrium = false;
  std::vector<Vec3> forces;     // contact forces in each tool Gauss frame, N
  std::vector<Vec3> torques;    // joint torques per contact finger, N mm
  double residual = 0.0;        // max-norm of the contact residual
  double min_clearance = kInf;
};

struct PathRecord {
  FPKind fp = FPKind::carve;
  int direction = 1;
  std::vector<StepRecord> steps;
  Termination termination = Termination::max_steps;
  double motion_range = 0.0;  // |phi| of the last completed step

  /// Steps whose rates and equilibrium were both established.
  int completedSteps() const {
    int k = 0;
    for (const auto& s : steps)
      if (s.equilibrium && s.rates.size() > 0) ++k;
      else break;
    return k;
  }
};

// ---------------------------------------------------------------------------
// One QP step
// ---------------------------------------------------------------------------

/// Columns of the moving fingers' joints in the flattened state.
inline std::vector<int> movingJointColumns(const FPSpec& fp) {
  std::vector<int> cols;
  const int n = fp.numContacts();
  for (int i : fp.movingContacts())
    for (int j = 0; j < 3; ++j) cols.push_back(layout::fingerVar(n, i) + j);
  return cols;
}

/// Rates of every contact coordinate (tool a1, a2, spin, finger a1, a2 per
/// contact) as a linear map of [u_t_dot; u_f_dot].
inline MatX coordinateRateMap(const std::vector<ContactEval>& ev, const FPSpec& fp,
                              const ToolMotion& motion) {
  const int n = static_cast<int>(ev.size());
  const auto moving = fp.movingContacts();
  const int nu = 1 + 3 * static_cast<int>(moving.size());
  MatX A = MatX::Zero(5 * n, nu);
  for (int i = 0; i < n; ++i) {
    int k_mov = -1;
    for (std::size_t k = 0; k < moving.size(); ++k)
      if (moving[k] == i) k_mov = static_cast<int>(k);
    for (int col = 0; col < nu; ++col) {
      Vec3 v = Vec3::Zero(), w = Vec3::Zero();
      if (col == 0) {
        v = -motion.axis.cross(ev[i].pt - motion.center);
        w = -motion.axis;
      } else if (k_mov >= 0 && (col - 1) / 3 == k_mov) {
        v = ev[i].Jv.col((col - 1) % 3);
        w = ev[i].Jw.col((col - 1) % 3);
      } else {
        continue;
      }
      const ContactRates r = rollSlideRates(ev[i], v, w);
      A.block<5, 1>(5 * i, col) << r.tool, r.spin, r.finger;
    }
  }
  return A;
}

enum class StepStatus { ok, qp_failure, joint_limit };

struct StepSolution {
  StepStatus status = StepStatus::qp_failure;
  VecX rates;
  double objective = 0.0;
  std::vector<double> sliding;
  bool at_joint_bound = false;  // a joint motion-range constraint is active
  std::vector<int> active;
};

/// Step QP over the moving fingers' joint rates. The tangential sliding
/// velocities are Axy * x + bxy.
struct StepQP {
  QPProblem qp;
  MatX Axy;
  VecX bxy;
};

inline StepQP buildStepQP(const SystemState& s, const DesignParams& d, const FPSpec& fp,
                          const PlanContext& ctx, const ToolMotion& motion, double u_t, double dt,
                          double margin) {
  const int n = s.numContacts();
  const auto moving = fp.movingContacts();
  const int m = 3 * static_cast<int>(moving.size());
  const auto ev = evaluateContacts(s, d, ctx.tool, motion.pose());
  const MatX J = contactVelocityJacobian(ev, fp, motion);
  const MatX Jt = J.col(0) * u_t;
  const MatX Jf = J.rightCols(m);

  // sliding objective and zero normal velocity
  MatX Axy(2 * n, m), Az(n, m);
  VecX bxy(2 * n), bz(n);
  for (int i = 0; i < n; ++i) {
    Axy.middleRows(2 * i, 2) = Jf.middleRows(3 * i, 2);
    bxy.segment<2>(2 * i) = Jt.col(0).segment<2>(3 * i);
    Az.row(i) = Jf.row(3 * i + 2);
    bz[i] = Jt(3 * i + 2, 0);
  }
  QPProblem qp;
  qp.H = Axy.transpose() * Axy;
  qp.g = Axy.transpose() * bxy;
  std::vector<int> eq_rows;
  for (int i = 0; i < n; ++i)
    if (Az.row(i).squaredNorm() > 0.0 || bz[i] != 0.0) eq_rows.push_back(i);
  qp.A_eq.resize(static_cast<int>(eq_rows.size()), m);
  qp.b_eq.resize(static_cast<int>(eq_rows.size()));
  for (std::size_t r = 0; r < eq_rows.size(); ++r) {
    qp.A_eq.row(r) = Az.row(eq_rows[r]);
    qp.b_eq[r] = -bz[eq_rows[r]];
  }

  // forward-Euler motion range of the joints as bounds on the rates
  qp.lb.resize(m);
  qp.ub.resize(m);
  for (std::size_t k = 0; k < moving.size(); ++k) {
    const Vec3 u = s.contacts[moving[k]].joints.vector();
    for (int j = 0; j < 3; ++j) {
      qp.lb[3 * k + j] = std::min(0.0, (ctx.limits.lo[j] - u[j]) / dt);
      qp.ub[3 * k + j] = std::max(0.0, (ctx.limits.hi[j] - u[j]) / dt);
    }
  }
  // contact coordinates within their domains, then linearized clearances
  const MatX A = coordinateRateMap(ev, fp, motion);
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  const auto addRow = [&](const Eigen::RowVectorXd& a, double b) {
    rows.push_back(a);
    rhs.push_back(b);
  };
  for (int i = 0; i < n; ++i) {
    const double end = ev[i].finger_domain_end - kPoleGuard * ev[i].finger_radius;
    const struct {
      int row;
      double value, lo, hi;
    } coords[2] = {{5 * i + 0, s.contacts[i].tool.a1, 0.0, ctx.tool.length},
                   {5 * i + 3, s.contacts[i].finger_a1, 0.0, end}};
    for (const auto& c : coords) {
      const Eigen::RowVectorXd a = A.row(c.row).tail(m) * dt;
      const double base = c.value + dt * A(c.row, 0) * u_t;
      if (a.squaredNorm() == 0.0 && base >= c.lo && base <= c.hi) continue;
      addRow(a, c.lo - base);   // value + dt*rate >= lo
      addRow(-a, base - c.hi);  // value + dt*rate <= hi
    }
  }
  const CollisionReport rep = collision_values(s, d, fp, ctx.tool, margin, motion, true);
  const auto cols = movingJointColumns(fp);
  for (int k = 0; k < rep.clearance.size(); ++k) {
    Eigen::RowVectorXd a(m);
    for (int j = 0; j < m; ++j) a[j] = rep.gradient(k, cols[j]) * dt;
    const double base = rep.clearance[k] + dt * rep.gradient_phi[k] * u_t;
    if (a.squaredNorm() == 0.0 && base >= 0.0) continue;
    addRow(a, -base);
  }
  qp.A_in.resize(static_cast<int>(rows.size()), m);
  qp.b_in.resize(static_cast<int>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    qp.A_in.row(r) = rows[r];
    qp.b_in[r] = rhs[r];
  }
  return {std::move(qp), std::move(Axy), std::move(bxy)};
}

/// Minimum-sliding joint rates for the moving fingers at the current state
/// and tool angle `motion.angle`, turning with signed rate `u_t`.
inline StepSolution plan_step(const SystemState& s, const DesignParams& d, const FPSpec& fp,
                              const PlanContext& ctx, const ToolMotion& motion, double u_t,
                              double dt, double margin, const std::vector<int>& warm = {}) {
  const int n = s.numContacts();
  const int m = 3 * static_cast<int>(fp.movingContacts().size());
  const StepQP sq = buildStepQP(s, d, fp, ctx, motion, u_t, dt, margin);
  const QPProblem& qp = sq.qp;
  QPOptions opt;
  opt.warm_active = warm;
  StepSolution out;
  QPResult res = solve_qp(qp, opt);
  if (res.status != QPStatus::optimal) {
    // infeasible only because of the joint motion range: a joint limit ends the path
    QPProblem relaxed = qp;
    relaxed.lb = VecX::Constant(m, -kInf);
    relaxed.ub = VecX::Constant(m, kInf);
    out.status = solve_qp(relaxed, {}).status == QPStatus::optimal ? StepStatus::joint_limit
                                                                   : StepStatus::qp_failure;
    return out;
  }
  out.status = StepStatus::ok;
  out.rates = res.x;
  out.active = res.active;
  const int m_in = static_cast<int>(qp.A_in.rows());
  for (int id : res.active)
    if (id >= m_in) out.at_joint_bound = true;
  const VecX vxy = sq.Axy * res.x + sq.bxy;
  out.sliding.resize(n);
  for (int i = 0; i < n; ++i) out.sliding[i] = vxy.segment<2>(2 * i).norm();
  out.objective = vxy.squaredNorm();
  return out;
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

namespace detail {

/// Integrated quantities: tool angle, moving joints, all contact coordinates.
struct PlanODE {
  const DesignParams& d;
  const FPSpec& fp;
  const PlanContext& ctx;
  ToolMotion axis;  // angle ignored
  double u_t;       // signed rate
  VecX rates;

  int size(int n, int m) const { return 1 + m + 5 * n; }

  VecX pack(double phi, const SystemState& s) const {
    const int n = s.numContacts();
    const auto moving = fp.movingContacts();
    const int m = 3 * static_cast<int>(moving.size());
    VecX y(size(n, m));
    y[0] = phi;
    for (std::size_t k = 0; k < moving.size(); ++k) y.segment<3>(1 + 3 * k) = s.contacts[moving[k]].joints.vector();
    for (int i = 0; i < n; ++i) {
      const auto& c = s.contacts[i];
      y.segment<5>(1 + m + 5 * i) << c.tool.a1, c.tool.a2, c.tool.spin, c.finger_a1, c.finger_a2;
    }
    return y;
  }

  SystemState unpack(const VecX& y, const SystemState& like) const {
    SystemState s = like;
    const int n = s.numContacts();
    const auto moving = fp.movingContacts();
    const int m = 3 * static_cast<int>(moving.size());
    for (std::size_t k = 0; k < moving.size(); ++k)
      s.contacts[moving[k]].joints = FingerJoints::fromVector(y.segment<3>(1 + 3 * k));
    for (int i = 0; i < n; ++i) {
      auto& c = s.contacts[i];
      const auto seg = y.segment<5>(1 + m + 5 * i);
      c.tool.a1 = seg[0];
      c.tool.a2 = seg[1];
      c.tool.spin = seg[2];
      c.finger_a1 = seg[3];
      c.finger_a2 = seg[4];
    }
    return s;
  }

  /// Time derivative. The joint rates are corrected by the minimum-norm
  /// change that cancels the normal relative velocity at this stage.
  VecX operator()(const VecX& y, const SystemState& like) const {
    const SystemState s = unpack(y, like);
    ToolMotion mo = axis;
    mo.angle = y[0];
    const int n = s.numContacts();
    const int m = static_cast<int>(rates.size());
    const auto ev = evaluateContacts(s, d, ctx.tool, mo.pose());
    VecX ud = rates;
    if (m > 0) {
      const MatX J = contactVelocityJacobian(ev, fp, mo);
      MatX Az(n, m);
      VecX vz(n);
      for (int i = 0; i < n; ++i) {
        Az.row(i) = J.row(3 * i + 2).tail(m);
        vz[i] = J(3 * i + 2, 0) * u_t + Az.row(i).dot(rates);
      }
      ud -= Az.completeOrthogonalDecomposition().solve(vz);
    }
    const MatX A = coordinateRateMap(ev, fp, mo);
    VecX in(1 + m);
    in << u_t, ud;
    VecX dy(y.size());
    dy[0] = u_t;
    dy.segment(1, m) = ud;
    dy.tail(5 * n) = A * in;
    return dy;
  }
};

}  // namespace detail

/// Largest contact residual a projected step may leave.
inline constexpr double kStepResidualMax = 1e-6;

/// One RK4 step of the tool angle, the moving joints and every contact
/// coordinate, with joint rates held at `rates`. Stationary fingers and the
/// hand are untouched. When the contact residual afterwards exceeds
/// `projection_tol`, the joints and contact coordinates are projected back;
/// a projection that fails to restore contact raises SingularityError.
inline SystemState advance(const SystemState& s, double& phi, const DesignParams& d, const FPSpec& fp,
                           const PlanContext& ctx, const ToolMotion& axis, double u_t,
                           const VecX& rates, double dt, double projection_tol = 1e-9) {
  detail::PlanODE f{d, fp, ctx, axis, u_t, rates};
  const VecX y0 = f.pack(phi, s);
  const VecX k1 = f(y0, s);
  const VecX k2 = f(y0 + 0.5 * dt * k1, s);
  const VecX k3 = f(y0 + 0.5 * dt * k2, s);
  const VecX k4 = f(y0 + dt * k3, s);
  VecX y = y0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  // the tool angle is integrated from a constant rate
  const double phi_next = phi + dt * u_t;
  y[0] = phi_next;
  SystemState next = f.unpack(y, s);
  ToolMotion mo = axis;
  mo.angle = phi_next;
  if (projection_tol > 0.0 &&
      contactResidual6(next, d, ctx.tool, mo.pose()).cwiseAbs().maxCoeff() > projection_tol) {
    const int n = next.numContacts();
    std::vector<char> free(layout::dimension(n), 0);
    for (int c : movingJointColumns(fp)) free[c] = 1;
    for (int i = 0; i < n; ++i) {
      free[layout::toolA1(i)] = free[layout::toolA2(i)] = 1;
      free[layout::fingerVar(n, i) + 3] = free[layout::fingerVar(n, i) + 4] = 1;
    }
    projectToContact(next, d, ctx.tool, mo.pose(), free, 1e-13);
    // the reduced residual also vanishes where the normals are parallel
    if (!(contactResidual6(next, d, ctx.tool, mo.pose()).cwiseAbs().maxCoeff() < kStepResidualMax))
      throw SingularityError("projection left the contact manifold");
  }
  phi = phi_next;
  return next;
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
  if (v.size() % 2 == 1) return v[h];
  const double hi = v[h];
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h) - 1, v.end());
  return 0.5 * (v[h - 1] + hi);
}

/// Plans one direction from the FP state `fp_state` (tool at rest).
inline PathRecord plan_path(const SystemState& fp_state, const DesignParams& d, const FPSpec& fp,
                            const PlanContext& ctx, const PlanConfig& cfg) {
  cfg.validate();
  PathRecord path;
  path.fp = fp.kind;
  path.direction = cfg.direction;
  const ToolMotion axis = fpRotationAxis(fp_state, d, fp, ctx.tool);
  const double u_t = cfg.direction * cfg.u_t_dot;
  const TipForce tip = TipForce::opposing(cfg.tip_force, cfg.direction);
  SystemState s = fp_state;
  double phi = 0.0;
  std::vector<int> warm;
  std::vector<double> objectives;
  int held = 0;
  for (int k = 0;; ++k) {
    StepRecord rec;
    rec.phi = phi;
    rec.state = s;
    ToolMotion mo = axis;
    mo.angle = phi;
    rec.residual = contactResidual6(s, d, ctx.tool, mo.pose()).cwiseAbs().maxCoeff();
    StepSolution st;
    try {
      st = plan_step(s, d, fp, ctx, mo, u_t, cfg.dt, cfg.collision_margin, warm);
    } catch (const std::runtime_error&) {
      // singular contact curvature
      path.steps.push_back(std::move(rec));
      path.termination = Termination::singularity;
      break;
    } catch (const DomainError&) {
      // a contact leaving its surface domain
      path.steps.push_back(std::move(rec));
      path.termination = Termination::singularity;
      break;
    }
    if (st.status != StepStatus::ok) {
      path.steps.push_back(std::move(rec));
      path.termination = st.status == StepStatus::joint_limit ? Termination::joint_limit : Termination::qp_failure;
      break;
    }
    rec.rates = st.rates;
    rec.sliding = st.sliding;
    rec.objective = st.objective;
    rec.min_clearance = collision_values(s, d, fp, ctx.tool, cfg.collision_margin, mo).min_clearance;
    const EquilibriumResult eq = equilibrium_feasible(s, d, fp, ctx.tool, tip, ctx.friction, mo);
    rec.equilibrium = eq.feasible;
    if (!eq.feasible) {
      path.steps.push_back(std::move(rec));
      path.termination = Termination::equilibrium_infeasible;
      break;
    }
    rec.forces = eq.forces;
    rec.torques = joint_torques(s, d, fp, ctx.tool, eq.forces, mo.pose());
    // a joint held at its bound while sliding grows ends the path
    const double med = median(objectives);
    held = st.at_joint_bound && st.objective > cfg.hold_factor * med ? held + 1 : 0;
    objectives.push_back(st.objective);
    path.steps.push_back(std::move(rec));
    if (held >= cfg.hold_steps) {
      path.termination = Termination::joint_limit;
      break;
    }
    if (k >= cfg.max_steps) {
      path.termination = Termination::max_steps;
      break;
    }
    warm = st.active;
    double phi_next = phi;
    SystemState next;
    try {
      next = advance(s, phi_next, d, fp, ctx, axis, u_t, st.rates, cfg.dt, cfg.projection_tol);
    } catch (const std::runtime_error&) {
      path.termination = Termination::singularity;
      break;
    } catch (const DomainError&) {
      path.termination = Termination::singularity;
      break;
    }
    // the linearized collision constraints no longer describe the step
    ToolMotion mo_next = axis;
    mo_next.angle = phi_next;
    if (collision_values(next, d, fp, ctx.tool, cfg.collision_margin, mo_next).min_clearance < -cfg.clearance_slack) {
      path.termination = Termination::qp_failure;
      break;
    }
    s = std::move(next);
    phi = phi_next;
  }
  const int done = path.completedSteps();
  path.motion_range = done > 0 ? std::abs(path.steps[done - 1].phi) : 0.0;
  return path;
}

/// Both directions for each FP: paths ordered (carve +, carve -, poke +, ...).
inline std::vector<PathRecord> plan_all(const std::array<SystemState, kNumFPs>& states,
                                        const DesignParams& d, const std::array<FPSpec, kNumFPs>& fps,
                                        const PlanContext& ctx, const PlanConfig& cfg) {
  std::vector<PathRecord> out;
  for (int k = 0; k < kNumFPs; ++k)
    for (int dir : {1, -1}) {
      PlanConfig c = cfg;
      c.direction = dir;
      out.push_back(plan_path(states[k], d, fps[k], ctx, c));
    }
  return out;
}

/// Total motion range of one FP: |phi_end(+)| + |phi_end(-)|.
inline double motionRange(const PathRecord& plus, const PathRecord& minus) {
  return plus.motion_range + minus.motion_range;
}

}  // namespace toolhand
