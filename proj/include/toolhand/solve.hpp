#pragma once

// Dense small-scale constrained solvers.
//
// solve_qp is a dual active-set method (Goldfarb-Idnani): it starts from the
// unconstrained minimum, adds the most violated constraint at each major
// iteration and drops constraints whose multipliers would turn negative. The
// factorization of the active set is rebuilt from scratch at every step; the
// problems solved here have a few dozen variables.
//
// solve_nlp is a line-search SQP with a damped BFGS Hessian, an l1 merit
// function, a second-order correction, and an elastic fallback when the
// linearized constraints are inconsistent.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "toolhand/math.hpp"

namespace toolhand {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// minimize 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq,  A_in x >= b_in,  lb <= x <= ub.
/// Empty matrices/vectors mean "no such constraints"; infinite bounds are skipped.
struct QPProblem {
  MatX H;
  VecX g;
  MatX A_eq;
  VecX b_eq;
  MatX A_in;
  VecX b_in;
  VecX lb;
  VecX ub;

  int numVars() const { return static_cast<int>(g.size()); }
};

enum class QPStatus { optimal, infeasible, iteration_limit };

inline const char* toString(QPStatus s) {
  switch (s) {
    case QPStatus::optimal: return "optimal";
    case QPStatus::infeasible: return "infeasible";
    case QPStatus::iteration_limit: return "iteration_limit";
  }
  return "?";
}

struct QPOptions {
  double tol = 1e-9;
  int max_iter = 100;
  /// Inequality ids (see QPResult::active) tried first when violated.
  std::vector<int> warm_active;
};

struct QPResult {
  QPStatus status = QPStatus::infeasible;
  VecX x;
  double objective = kInf;
  VecX lambda_eq;
  VecX lambda_in;
  VecX lambda_lb;
  VecX lambda_ub;
  /// Active inequality ids: [0, m_in) rows of A_in, m_in + i lower bound of
  /// x_i, m_in + n + i upper bound of x_i.
  std::vector<int> active;
  int iterations = 0;
  double hessian_shift = 0.0;
};

namespace detail {

class QPInequalities {
 public:
  explicit QPInequalities(const QPProblem& p) : p_(p), n_(p.numVars()) {
    m_in_ = static_cast<int>(p.A_in.rows());
    for (int i = 0; i < m_in_; ++i) ids_.push_back(i);
    if (p.lb.size() == n_)
      for (int i = 0; i < n_; ++i)
        if (std::isfinite(p.lb[i])) ids_.push_back(m_in_ + i);
    if (p.ub.size() == n_)
      for (int i = 0; i < n_; ++i)
        if (std::isfinite(p.ub[i])) ids_.push_back(m_in_ + n_ + i);
  }
  const std::vector<int>& ids() const { return ids_; }
  int m_in() const { return m_in_; }

  VecX normal(int id) const {
    if (id < m_in_) return p_.A_in.row(id).transpose();
    VecX e = VecX::Zero(n_);
    if (id < m_in_ + n_) e[id - m_in_] = 1.0;
    else e[id - m_in_ - n_] = -1.0;
    return e;
  }
  double rhs(int id) const {
    if (id < m_in_) return p_.b_in[id];
    if (id < m_in_ + n_) return p_.lb[id - m_in_];
    return -p_.ub[id - m_in_ - n_];
  }
  double slack(int id, const VecX& x) const {
    if (id < m_in_) return p_.A_in.row(id).dot(x) - p_.b_in[id];
    if (id < m_in_ + n_) return x[id - m_in_] - p_.lb[id - m_in_];
    return p_.ub[id - m_in_ - n_] - x[id - m_in_ - n_];
  }

 private:
  const QPProblem& p_;
  int n_;
  int m_in_ = 0;
  std::vector<int> ids_;
};

struct ActiveStep {
  VecX z;        // primal direction
  VecX r;        // dual direction for the active set
  double d2 = 0.0;  // |J2' n|^2 = z' n
  double d = 0.0;   // |J' n|^2
};

}  // namespace detail

inline QPResult solve_qp(const QPProblem& prob, const QPOptions& opt = {}) {
  const int n = prob.numVars();
  if (prob.H.rows() != n || prob.H.cols() != n) throw std::invalid_argument("QP: H has wrong shape");
  const int me = static_cast<int>(prob.A_eq.rows());
  if (me > 0 && (prob.A_eq.cols() != n || prob.b_eq.size() != me))
    throw std::invalid_argument("QP: equality block has wrong shape");
  if (prob.A_in.rows() > 0 && (prob.A_in.cols() != n || prob.b_in.size() != prob.A_in.rows()))
    throw std::invalid_argument("QP: inequality block has wrong shape");

  QPResult res;
  const MatX Hs = 0.5 * (prob.H + prob.H.transpose());
  const double scale = std::max(1.0, Hs.diagonal().cwiseAbs().maxCoeff());
  Eigen::LLT<MatX> llt(Hs);
  const auto weakPivot = [&](const Eigen::LLT<MatX>& f) {
    return f.info() != Eigen::Success ||
           f.matrixL().toDenseMatrix().diagonal().cwiseAbs2().minCoeff() < 1e-12 * scale;
  };
  if (n > 0 && weakPivot(llt)) {
    res.hessian_shift = 1e-8 * scale;
    llt.compute(Hs + res.hessian_shift * MatX::Identity(n, n));
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("QP: Hessian is not positive semidefinite");
  }
  // J = L^{-T}
  const MatX L = llt.matrixL();
  const MatX J = L.transpose().triangularView<Eigen::Upper>().solve(MatX::Identity(n, n));

  VecX x = -llt.solve(prob.g);
  const detail::QPInequalities ineq(prob);

  // active set: -(i+1) for equality i, otherwise inequality id
  std::vector<int> act;
  std::vector<double> u;
  const auto normalOf = [&](int a) -> VecX {
    return a < 0 ? VecX(prob.A_eq.row(-a - 1).transpose()) : ineq.normal(a);
  };

  const auto computeStep = [&](const VecX& np) {
    detail::ActiveStep s;
    const int q = static_cast<int>(act.size());
    const VecX Jtn = J.transpose() * np;
    s.d = Jtn.squaredNorm();
    if (q == 0) {
      s.z = J * Jtn;
      s.d2 = s.d;
      return s;
    }
    MatX N(n, q);
    for (int k = 0; k < q; ++k) N.col(k) = normalOf(act[k]);
    const MatX B = J.transpose() * N;
    Eigen::HouseholderQR<MatX> qr(B);
    const MatX Q = qr.householderQ();
    const VecX dq = Q.transpose() * Jtn;
    const VecX d2 = dq.tail(n - q);
    s.z = J * (Q.rightCols(n - q) * d2);
    s.d2 = d2.squaredNorm();
    const MatX R = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
    s.r = R.triangularView<Eigen::Upper>().solve(dq.head(q));
    return s;
  };
  constexpr double kDep = 1e-12;

  // equality constraints
  for (int i = 0; i < me; ++i) {
    const VecX np = prob.A_eq.row(i).transpose();
    const double s = np.dot(x) - prob.b_eq[i];
    const auto st = computeStep(np);
    if (st.d2 <= kDep * st.d || st.d == 0.0) {
      if (std::abs(s) <= opt.tol * std::max(1.0, std::abs(prob.b_eq[i]))) continue;
      res.status = QPStatus::infeasible;
      res.x = x;
      return res;
    }
    const double t = -s / st.d2;
    x += t * st.z;
    for (std::size_t k = 0; k < act.size(); ++k) u[k] -= t * st.r[k];
    act.push_back(-(i + 1));
    u.push_back(t);
  }

  std::vector<char> excluded(ineq.ids().empty() ? 0 : (ineq.ids().back() + 1), 0);
  std::vector<char> warm(excluded.size(), 0);
  for (int w : opt.warm_active)
    if (w >= 0 && w < static_cast<int>(warm.size())) warm[w] = 1;
  const auto isActive = [&](int id) { return std::find(act.begin(), act.end(), id) != act.end(); };
  const auto tolOf = [&](int id) { return opt.tol * std::max(1.0, std::abs(ineq.rhs(id))); };

  int iter = 0;
  bool done = false;
  while (!done) {
    int p = -1;
    double worst = 0.0;
    bool worst_warm = false;
    for (int id : ineq.ids()) {
      if (excluded[id] || isActive(id)) continue;
      const double s = ineq.slack(id, x);
      if (s >= -tolOf(id)) continue;
      const bool w = warm[id] != 0;
      if (p < 0 || (w && !worst_warm) || (w == worst_warm && s < worst)) {
        p = id;
        worst = s;
        worst_warm = w;
      }
    }
    if (p < 0) break;

    const VecX np = ineq.normal(p);
    double up = 0.0;
    double sp = worst;
    while (true) {
      if (++iter > opt.max_iter) {
        res.status = QPStatus::iteration_limit;
        res.x = x;
        res.iterations = iter;
        return res;
      }
      const auto st = computeStep(np);
      double t1 = kInf;
      int drop = -1;
      for (std::size_t k = 0; k < act.size(); ++k) {
        if (act[k] < 0 || st.r[k] <= 0.0) continue;
        const double ratio = u[k] / st.r[k];
        if (ratio < t1) {
          t1 = ratio;
          drop = static_cast<int>(k);
        }
      }
      const bool dependent = st.d2 <= kDep * st.d || st.d == 0.0;
      const double t2 = dependent ? kInf : -sp / st.d2;
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        res.status = QPStatus::infeasible;
        res.x = x;
        res.iterations = iter;
        return res;
      }
      if (!std::isfinite(t2)) {
        for (std::size_t k = 0; k < act.size(); ++k) u[k] -= t * st.r[k];
        up += t;
        act.erase(act.begin() + drop);
        u.erase(u.begin() + drop);
        continue;
      }
      x += t * st.z;
      for (std::size_t k = 0; k < act.size(); ++k) u[k] -= t * st.r[k];
      up += t;
      if (t2 <= t1) {
        act.push_back(p);
        u.push_back(up);
        break;
      }
      act.erase(act.begin() + drop);
      u.erase(u.begin() + drop);
      sp = ineq.slack(p, x);
      if (sp >= -tolOf(p) * 1e-3) {
        // the partial step already satisfied p; it is not added
        break;
      }
    }
    (void)done;
  }

  res.status = QPStatus::optimal;
  res.x = x;
  res.iterations = iter;
  res.objective = 0.5 * x.dot(prob.H * x) + prob.g.dot(x);
  res.lambda_eq = VecX::Zero(me);
  res.lambda_in = VecX::Zero(prob.A_in.rows());
  res.lambda_lb = VecX::Zero(n);
  res.lambda_ub = VecX::Zero(n);
  const int mi = ineq.m_in();
  for (std::size_t k = 0; k < act.size(); ++k) {
    const int a = act[k];
    if (a < 0) {
      res.lambda_eq[-a - 1] = u[k];
      continue;
    }
    res.active.push_back(a);
    if (a < mi) res.lambda_in[a] = u[k];
    else if (a < mi + n) res.lambda_lb[a - mi] = u[k];
    else res.lambda_ub[a - mi - n] = u[k];
  }
  std::sort(res.active.begin(), res.active.end());
  return res;
}

// ---------------------------------------------------------------------------
// SQP
// ---------------------------------------------------------------------------

/// minimize f(x) s.t. eq(x) = 0, ineq(x) >= 0, lb <= x <= ub.
struct NLPProblem {
  std::function<double(const VecX&, VecX*)> cost;
  std::function<VecX(const VecX&, MatX*)> eq;
  std::function<VecX(const VecX&, MatX*)> ineq;
  VecX lb;
  VecX ub;
  VecX x0;
};

struct NLPOptions {
  double tol_con = 1e-8;
  double tol_opt = 1e-6;
  int max_iter = 200;
  int qp_max_iter = 200;
};

enum class NLPStatus { converged, line_search_stall, subproblem_failure, iteration_limit };

inline const char* toString(NLPStatus s) {
  switch (s) {
    case NLPStatus::converged: return "converged";
    case NLPStatus::line_search_stall: return "line_search_stall";
    case NLPStatus::subproblem_failure: return "subproblem_failure";
    case NLPStatus::iteration_limit: return "iteration_limit";
  }
  return "?";
}

struct NLPResult {
  NLPStatus status = NLPStatus::iteration_limit;
  VecX x;
  double cost = kInf;
  double violation = kInf;
  double optimality = kInf;
  int iterations = 0;
  VecX lambda_eq;
  VecX lambda_in;
};

namespace detail {

struct NLPPoint {
  VecX x;
  double f = 0.0;
  VecX g;
  VecX ce;
  MatX Je;
  VecX ci;
  MatX Ji;
};

inline NLPPoint evalPoint(const NLPProblem& p, const VecX& x, bool derivs) {
  NLPPoint pt;
  pt.x = x;
  const int n = static_cast<int>(x.size());
  pt.g = VecX::Zero(n);
  pt.f = p.cost(x, derivs ? &pt.g : nullptr);
  if (p.eq) pt.ce = p.eq(x, derivs ? &pt.Je : nullptr);
  if (p.ineq) pt.ci = p.ineq(x, derivs ? &pt.Ji : nullptr);
  if (pt.Je.rows() != pt.ce.size()) pt.Je.resize(pt.ce.size(), n);
  if (pt.Ji.rows() != pt.ci.size()) pt.Ji.resize(pt.ci.size(), n);
  return pt;
}

inline double violationL1(const VecX& ce, const VecX& ci) {
  double v = ce.cwiseAbs().sum();
  for (int i = 0; i < ci.size(); ++i) v += std::max(0.0, -ci[i]);
  return v;
}

inline double violationInf(const VecX& ce, const VecX& ci) {
  double v = ce.size() ? ce.cwiseAbs().maxCoeff() : 0.0;
  for (int i = 0; i < ci.size(); ++i) v = std::max(v, -ci[i]);
  return v;
}

inline VecX clampTo(const VecX& x, const VecX& lb, const VecX& ub) {
  return x.cwiseMax(lb).cwiseMin(ub);
}

}  // namespace detail

inline NLPResult solve_nlp(const NLPProblem& prob, const NLPOptions& opt = {}) {
  using detail::NLPPoint;
  const int n = static_cast<int>(prob.x0.size());
  const VecX lb = prob.lb.size() == n ? prob.lb : VecX::Constant(n, -kInf);
  const VecX ub = prob.ub.size() == n ? prob.ub : VecX::Constant(n, kInf);

  NLPPoint cur = detail::evalPoint(prob, detail::clampTo(prob.x0, lb, ub), true);
  const int me = static_cast<int>(cur.ce.size());
  const int mi = static_cast<int>(cur.ci.size());
  MatX B = MatX::Identity(n, n);
  double nu = 1.0;
  double prox = 0.0;  // proximal damping added to B after short steps
  VecX lam_e = VecX::Zero(me), lam_i = VecX::Zero(mi);
  std::vector<int> warm;

  NLPResult res;
  const auto finish = [&](NLPStatus st, int iter, double optimality) {
    res.status = st;
    res.x = cur.x;
    res.cost = cur.f;
    res.violation = detail::violationInf(cur.ce, cur.ci);
    res.optimality = optimality;
    res.iterations = iter;
    res.lambda_eq = lam_e;
    res.lambda_in = lam_i;
    return res;
  };

  const auto subproblem = [&](const NLPPoint& at, const VecX& ce_rhs, const VecX& ci_rhs,
                              QPResult& out) {
    QPProblem qp;
    qp.H = B;
    if (prox > 0.0) qp.H.diagonal().array() += prox;
    qp.g = at.g;
    qp.A_eq = at.Je;
    qp.b_eq = -ce_rhs;
    qp.A_in = at.Ji;
    qp.b_in = -ci_rhs;
    qp.lb = lb - at.x;
    qp.ub = ub - at.x;
    QPOptions qo;
    qo.max_iter = opt.qp_max_iter;
    qo.warm_active = warm;
    out = solve_qp(qp, qo);
    return out.status == QPStatus::optimal;
  };

  // Elastic mode: l1 slacks on every linearized constraint.
  const auto elastic = [&](const NLPPoint& at, double rho, QPResult& out, VecX& step) {
    const int ne = n + 2 * me + mi;
    QPProblem qp;
    qp.H = MatX::Zero(ne, ne);
    qp.H.topLeftCorner(n, n) = B;
    if (prox > 0.0) qp.H.topLeftCorner(n, n).diagonal().array() += prox;
    qp.H.bottomRightCorner(ne - n, ne - n) = 1e-6 * MatX::Identity(ne - n, ne - n);
    qp.g = VecX::Constant(ne, rho);
    qp.g.head(n) = at.g;
    qp.A_eq = MatX::Zero(me, ne);
    qp.A_eq.leftCols(n) = at.Je;
    qp.A_eq.block(0, n, me, me) = -MatX::Identity(me, me);
    qp.A_eq.block(0, n + me, me, me) = MatX::Identity(me, me);
    qp.b_eq = -at.ce;
    qp.A_in = MatX::Zero(mi, ne);
    qp.A_in.leftCols(n) = at.Ji;
    qp.A_in.rightCols(mi) = MatX::Identity(mi, mi);
    qp.b_in = -at.ci;
    qp.lb = VecX::Zero(ne);
    qp.ub = VecX::Constant(ne, kInf);
    qp.lb.head(n) = lb - at.x;
    qp.ub.head(n) = ub - at.x;
    QPOptions qo;
    qo.max_iter = 4 * opt.qp_max_iter;
    out = solve_qp(qp, qo);
    if (out.status != QPStatus::optimal) return false;
    step = out.x.head(n);
    out.lambda_lb = out.lambda_lb.head(n).eval();
    out.lambda_ub = out.lambda_ub.head(n).eval();
    return true;
  };

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    QPResult qr;
    VecX p;
    bool used_elastic = false;
    const double rho = std::max(10.0, 10.0 * nu);
    if (subproblem(cur, cur.ce, cur.ci, qr)) {
      p = qr.x;
      warm = qr.active;
    } else {
      if (!elastic(cur, rho, qr, p)) return finish(NLPStatus::subproblem_failure, iter, kInf);
      used_elastic = true;
      warm.clear();
    }
    const VecX new_le = qr.lambda_eq;
    const VecX new_li = qr.lambda_in;
    const VecX lam_b = qr.lambda_lb - qr.lambda_ub;

    // first-order optimality at the current point with the QP multipliers
    VecX grad_l = cur.g - lam_b;
    if (me) grad_l -= cur.Je.transpose() * new_le;
    if (mi) grad_l -= cur.Ji.transpose() * new_li;
    double compl_err = 0.0;
    for (int i = 0; i < mi; ++i) compl_err = std::max(compl_err, std::abs(new_li[i] * cur.ci[i]));
    for (int i = 0; i < n; ++i) {
      if (qr.lambda_lb[i] > 0.0) compl_err = std::max(compl_err, std::abs(qr.lambda_lb[i] * (cur.x[i] - lb[i])));
      if (qr.lambda_ub[i] > 0.0) compl_err = std::max(compl_err, std::abs(qr.lambda_ub[i] * (ub[i] - cur.x[i])));
    }
    const double optimality = std::max(grad_l.cwiseAbs().maxCoeff(), compl_err);
    const double viol = detail::violationInf(cur.ce, cur.ci);
    if (!used_elastic && viol < opt.tol_con && optimality < opt.tol_opt) {
      lam_e = new_le;
      lam_i = new_li;
      return finish(NLPStatus::converged, iter, optimality);
    }

    const double lam_max = std::max(new_le.size() ? new_le.cwiseAbs().maxCoeff() : 0.0,
                                    new_li.size() ? new_li.cwiseAbs().maxCoeff() : 0.0);
    // elastic multipliers are capped by the elastic weight, which then serves as the penalty
    if (!used_elastic && nu < lam_max + 1e-6) nu = 1.5 * lam_max + 1e-3;
    const double pen = used_elastic ? rho : nu;

    const double v0 = detail::violationL1(cur.ce, cur.ci);
    const double phi0 = cur.f + pen * v0;
    VecX ce_lin = cur.ce, ci_lin = cur.ci;
    if (me) ce_lin += cur.Je * p;
    if (mi) ci_lin += cur.Ji * p;
    const double D = cur.g.dot(p) + pen * (detail::violationL1(ce_lin, ci_lin) - v0);

    double alpha = 1.0;
    NLPPoint trial;
    bool accepted = false;
    bool soc_tried = false;
    while (alpha > 1e-10) {
      const VecX xt = detail::clampTo(cur.x + alpha * p, lb, ub);
      trial = detail::evalPoint(prob, xt, false);
      const double phi = trial.f + pen * detail::violationL1(trial.ce, trial.ci);
      if (phi <= phi0 + 1e-4 * alpha * std::min(D, 0.0) + 1e-14 * std::abs(phi0)) {
        accepted = true;
        break;
      }
      if (alpha == 1.0 && !soc_tried && me + mi > 0) {
        soc_tried = true;
        VecX ce_soc = trial.ce, ci_soc = trial.ci;
        if (me) ce_soc -= cur.Je * p;
        if (mi) ci_soc -= cur.Ji * p;
        QPResult sr;
        if (subproblem(cur, ce_soc, ci_soc, sr)) {
          const VecX xs = detail::clampTo(cur.x + sr.x, lb, ub);
          NLPPoint soc = detail::evalPoint(prob, xs, false);
          const double phis = soc.f + pen * detail::violationL1(soc.ce, soc.ci);
          if (phis <= phi0 + 1e-4 * std::min(D, 0.0)) {
            trial = std::move(soc);
            accepted = true;
            break;
          }
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) return finish(NLPStatus::line_search_stall, iter, optimality);
    const double bscale = B.diagonal().cwiseAbs().mean();
    if (alpha < 0.5) prox = std::min(std::max(4.0 * prox, 1e-2 * bscale), 1e6 * bscale);
    else if (alpha == 1.0) prox = prox < 1e-6 * bscale ? 0.0 : 0.25 * prox;

    NLPPoint next = detail::evalPoint(prob, trial.x, true);
    // damped BFGS on the Lagrangian
    const VecX s = next.x - cur.x;
    VecX y = next.g - cur.g;
    if (me) y -= (next.Je - cur.Je).transpose() * new_le;
    if (mi) y -= (next.Ji - cur.Ji).transpose() * new_li;
    const VecX Bs = B * s;
    const double sBs = s.dot(Bs);
    if (sBs > 1e-16) {
      double sy = s.dot(y);
      if (sy < 0.2 * sBs) {
        const double th = 0.8 * sBs / (sBs - sy);
        y = th * y + (1.0 - th) * Bs;
        sy = s.dot(y);
      }
      B += (y * y.transpose()) / sy - (Bs * Bs.transpose()) / sBs;
      B = 0.5 * (B + B.transpose());
      // rounding can destroy definiteness; restart from a scaled identity
      Eigen::LLT<MatX> chk(B);
      if (chk.info() != Eigen::Success ||
          chk.matrixL().toDenseMatrix().diagonal().minCoeff() < 1e-6 * std::sqrt(B.diagonal().maxCoeff()))
        B = MatX::Identity(n, n) * std::clamp(sy / y.squaredNorm() > 0 ? y.squaredNorm() / sy : 1.0, 1e-4, 1e4);
    }
    lam_e = new_le;
    lam_i = new_li;
    cur = std::move(next);
  }
  return finish(NLPStatus::iteration_limit, opt.max_iter, kInf);
}

}  // namespace toolhand
