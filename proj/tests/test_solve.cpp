#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "toolhand/solve.hpp"

using namespace toolhand;
using toolhand::test::randomPSD;
using toolhand::test::uniform;

namespace {

/// Independent KKT check for min 1/2 x'Hx + g'x, A_eq x = b, A_in x >= b, lb <= x <= ub.
double kktError(const QPProblem& p, const QPResult& r) {
  const VecX& x = r.x;
  VecX grad = p.H * x + p.g;
  double err = 0.0;
  if (p.A_eq.rows()) {
    grad -= p.A_eq.transpose() * r.lambda_eq;
    err = std::max(err, (p.A_eq * x - p.b_eq).cwiseAbs().maxCoeff());
  }
  if (p.A_in.rows()) {
    grad -= p.A_in.transpose() * r.lambda_in;
    const VecX s = p.A_in * x - p.b_in;
    err = std::max(err, (-s).maxCoeff());
    err = std::max(err, (-r.lambda_in).maxCoeff());
    err = std::max(err, s.cwiseProduct(r.lambda_in).cwiseAbs().maxCoeff());
  }
  if (p.lb.size()) {
    grad -= r.lambda_lb;
    grad += r.lambda_ub;
    for (int i = 0; i < x.size(); ++i) {
      if (std::isfinite(p.lb[i])) {
        err = std::max(err, p.lb[i] - x[i]);
        err = std::max(err, std::abs(r.lambda_lb[i] * (x[i] - p.lb[i])));
      }
      if (std::isfinite(p.ub[i])) {
        err = std::max(err, x[i] - p.ub[i]);
        err = std::max(err, std::abs(r.lambda_ub[i] * (p.ub[i] - x[i])));
      }
      err = std::max(err, -r.lambda_lb[i]);
      err = std::max(err, -r.lambda_ub[i]);
    }
  }
  return std::max(err, grad.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(SolveQP, Unconstrained) {
  QPProblem p;
  p.H = MatX::Identity(3, 3);
  p.g = VecX::Zero(3);
  const QPResult r = solve_qp(p);
  EXPECT_EQ(r.status, QPStatus::optimal);
  EXPECT_LT(r.x.norm(), 1e-15);
}

TEST(SolveQP, SymmetricEquality) {
  QPProblem p;
  p.H = 2.0 * MatX::Identity(2, 2);
  p.g = VecX::Zero(2);
  p.A_eq = MatX::Ones(1, 2);
  p.b_eq = VecX::Ones(1);
  const QPResult r = solve_qp(p);
  EXPECT_EQ(r.status, QPStatus::optimal);
  EXPECT_LT((r.x - Vec2(0.5, 0.5)).norm(), 1e-12);
}

TEST(SolveQP, DetectsInfeasibility) {
  QPProblem p;
  p.H = MatX::Identity(2, 2);
  p.g = VecX::Zero(2);
  p.A_in = MatX(2, 2);
  p.A_in << 1, 1, -1, -1;
  p.b_in = Vec2(1.0, 0.0);
  EXPECT_EQ(solve_qp(p).status, QPStatus::infeasible);
}

TEST(SolveQP, IterationLimit) {
  QPProblem p;
  const int n = 10;
  p.H = MatX::Identity(n, n);
  p.g = VecX::Zero(n);
  p.lb = VecX::Ones(n);
  p.ub = VecX::Constant(n, 2.0);
  QPOptions o;
  o.max_iter = 3;
  EXPECT_EQ(solve_qp(p, o).status, QPStatus::iteration_limit);
}

TEST(SolveQP, RejectsIndefiniteHessian) {
  QPProblem p;
  p.H = MatX::Identity(2, 2);
  p.H(1, 1) = -1.0;
  p.g = VecX::Zero(2);
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
}

TEST(SolveQP, SemidefiniteHessianWithBounds) {
  QPProblem p;
  p.H = MatX::Zero(2, 2);
  p.H(0, 0) = 1.0;
  p.g = Vec2(-1.0, 1.0);
  p.lb = Vec2(-5.0, -2.0);
  p.ub = Vec2(5.0, 2.0);
  const QPResult r = solve_qp(p);
  ASSERT_EQ(r.status, QPStatus::optimal);
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], -2.0, 1e-9);
}

TEST(SolveQP, ProjectedGradientOracle) {
  std::mt19937_64 rng(21);
  double worst_kkt = 0.0;
  for (int k = 0; k < 50; ++k) {
    const QPProblem p = test::randomBoxQP(rng, k);
    QPOptions o;
    o.max_iter = 1000;
    const QPResult r = solve_qp(p, o);
    ASSERT_EQ(r.status, QPStatus::optimal);
    worst_kkt = std::max(worst_kkt, kktError(p, r));
  }
  EXPECT_LT(worst_kkt, 1e-6);
  EXPECT_LT(test::worstQPGap(21, 50), 1e-6);
}

TEST(SolveQP, GeneralConstraintsPassKKT) {
  std::mt19937_64 rng(22);
  for (int k = 0; k < 100; ++k) {
    const int n = 3 + static_cast<int>(rng() % 12);
    const int me = static_cast<int>(rng() % 3), mi = static_cast<int>(rng() % 15);
    QPProblem p;
    p.H = randomPSD(rng, n, n) + 0.01 * MatX::Identity(n, n);
    p.g = VecX::NullaryExpr(n, [&](Eigen::Index) { return uniform(rng, -2, 2); });
    // constraints built around a known feasible point
    const VecX x0 = VecX::NullaryExpr(n, [&](Eigen::Index) { return uniform(rng, -1, 1); });
    p.A_eq = MatX::NullaryExpr(me, n, [&](Eigen::Index, Eigen::Index) { return uniform(rng, -1, 1); });
    p.b_eq = p.A_eq * x0;
    p.A_in = MatX::NullaryExpr(mi, n, [&](Eigen::Index, Eigen::Index) { return uniform(rng, -1, 1); });
    p.b_in = p.A_in * x0 - VecX::NullaryExpr(mi, [&](Eigen::Index) { return uniform(rng, 0, 0.5); });
    QPOptions o;
    o.max_iter = 500;
    const QPResult r = solve_qp(p, o);
    ASSERT_EQ(r.status, QPStatus::optimal) << k;
    EXPECT_LT(kktError(p, r), 1e-8) << k;
    // warm start reaches the same point
    o.warm_active = r.active;
    const QPResult w = solve_qp(p, o);
    EXPECT_LT((w.x - r.x).norm(), 1e-8);
  }
}

TEST(SolveQP, Deterministic) {
  std::mt19937_64 rng(23);
  QPProblem p;
  p.H = randomPSD(rng, 8, 10);
  p.g = VecX::Ones(8);
  p.A_in = MatX::Identity(8, 8);
  p.b_in = VecX::Constant(8, 0.1);
  const QPResult a = solve_qp(p), b = solve_qp(p);
  EXPECT_TRUE(a.x == b.x);
  EXPECT_EQ(a.active, b.active);
}

TEST(SolveNLP, BoundActive) {
  NLPProblem p;
  p.cost = [](const VecX& x, VecX* g) {
    if (g) *g = VecX::Constant(1, 2.0 * (x[0] - 1.0));
    return (x[0] - 1.0) * (x[0] - 1.0);
  };
  p.ineq = [](const VecX& x, MatX* J) {
    if (J) *J = MatX::Constant(1, 1, -1.0);
    return VecX::Constant(1, 0.5 - x[0]);
  };
  p.x0 = VecX::Zero(1);
  const NLPResult r = solve_nlp(p);
  ASSERT_EQ(r.status, NLPStatus::converged);
  EXPECT_NEAR(r.x[0], 0.5, 1e-8);
}

TEST(SolveNLP, HyperbolaConstraint) {
  NLPProblem p;
  p.cost = [](const VecX& x, VecX* g) {
    if (g) *g = 2.0 * x;
    return x.squaredNorm();
  };
  p.eq = [](const VecX& x, MatX* J) {
    if (J) {
      J->resize(1, 2);
      *J << x[1], x[0];
    }
    return VecX::Constant(1, x[0] * x[1] - 1.0);
  };
  p.x0 = Vec2(2.0, 0.7);
  const NLPResult r = solve_nlp(p);
  ASSERT_EQ(r.status, NLPStatus::converged);
  EXPECT_NEAR(r.cost, 2.0, 1e-7);
  EXPECT_NEAR(std::abs(r.x[0]), 1.0, 1e-5);
  EXPECT_NEAR(r.x[0], r.x[1], 1e-5);
}

TEST(SolveNLP, EqualityQuadraticsMatchClosedForm) {
  std::mt19937_64 rng(24);
  for (int k = 0; k < 30; ++k) {
    const int n = 3 + static_cast<int>(rng() % 8);
    const int m = 1 + static_cast<int>(rng() % (n - 1));
    const MatX H = randomPSD(rng, n, n) + 0.5 * MatX::Identity(n, n);
    const VecX c = VecX::NullaryExpr(n, [&](Eigen::Index) { return uniform(rng, -1, 1); });
    const MatX A = MatX::NullaryExpr(m, n, [&](Eigen::Index, Eigen::Index) { return uniform(rng, -1, 1); });
    const VecX b = VecX::NullaryExpr(m, [&](Eigen::Index) { return uniform(rng, -1, 1); });
    MatX K = MatX::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = H;
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
    VecX rhs(n + m);
    rhs << -c, b;
    const VecX exact = K.fullPivLu().solve(rhs).head(n);
    NLPProblem p;
    p.cost = [&](const VecX& x, VecX* g) {
      if (g) *g = H * x + c;
      return 0.5 * x.dot(H * x) + c.dot(x);
    };
    p.eq = [&](const VecX& x, MatX* J) {
      if (J) *J = A;
      return (A * x - b).eval();
    };
    p.x0 = VecX::Zero(n);
    const NLPResult r = solve_nlp(p);
    ASSERT_EQ(r.status, NLPStatus::converged);
    EXPECT_LT((r.x - exact).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(SolveNLP, NeverLeavesBounds) {
  NLPProblem p;
  p.cost = [](const VecX& x, VecX* g) {
    if (g) *g = Vec2(4.0 * std::pow(x[0] - 3.0, 3), 2.0 * (x[1] + 4.0));
    return std::pow(x[0] - 3.0, 4) + std::pow(x[1] + 4.0, 2);
  };
  p.lb = Vec2(-1.0, -1.0);
  p.ub = Vec2(1.0, 1.0);
  p.x0 = Vec2(0.0, 0.0);
  const NLPResult r = solve_nlp(p);
  EXPECT_EQ(r.status, NLPStatus::converged);
  EXPECT_TRUE(((r.x - p.lb).array() >= 0.0).all());
  EXPECT_TRUE(((p.ub - r.x).array() >= 0.0).all());
  EXPECT_NEAR(r.x[0], 1.0, 1e-9);
  EXPECT_NEAR(r.x[1], -1.0, 1e-9);
}

TEST(SolveNLP, InfeasibleReturnsStatus) {
  NLPProblem p;
  p.cost = [](const VecX& x, VecX* g) {
    if (g) *g = 2.0 * x;
    return x.squaredNorm();
  };
  p.eq = [](const VecX& x, MatX* J) {
    if (J) *J = 2.0 * x.transpose();
    return VecX::Constant(1, x.squaredNorm() + 1.0);
  };
  p.x0 = Vec2(0.3, 0.2);
  NLPOptions o;
  o.max_iter = 50;
  const NLPResult r = solve_nlp(p, o);
  EXPECT_NE(r.status, NLPStatus::converged);
}
