#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "toolhand/model.hpp"

using namespace toolhand;
using toolhand::test::randomDesign;
using toolhand::test::uniform;

namespace {

void expectRotation(const Mat3& R) {
  EXPECT_LT((R.transpose() * R - Mat3::Identity()).norm(), 1e-10);
  EXPECT_NEAR(R.determinant(), 1.0, 1e-10);
}


}  // namespace

TEST(CylinderFrame, AxisAlignedPoint) {
  const ToolGeom tool;
  const Transform T = cylinder_frame(tool, {0.0, 0.0, 0.0});
  EXPECT_LT((T.translation() - Vec3(5, 0, 0)).norm(), 1e-12);
  EXPECT_LT((T.linear().col(2) - Vec3(-1, 0, 0)).norm(), 1e-12);
}

TEST(CylinderFrame, OppositeSide) {
  const ToolGeom tool;
  const Transform T = cylinder_frame(tool, {10.0, kPi, 0.0});
  EXPECT_LT((T.translation() - Vec3(-5, 0, 10)).norm(), 1e-12);
  EXPECT_LT((T.linear().col(2) - Vec3(1, 0, 0)).norm(), 1e-12);
}

TEST(CylinderFrame, TangentsOrthogonalToNormal) {
  const ToolGeom tool;
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) {
    const SurfaceCoords c{uniform(rng, 1.0, 149.0), uniform(rng, -kPi, kPi), uniform(rng, -kPi, kPi)};
    const Transform T = cylinder_frame(tool, c);
    expectRotation(T.linear());
    const double h = 1e-6;
    for (int j = 0; j < 2; ++j) {
      SurfaceCoords p = c, m = c;
      (j == 0 ? p.a1 : p.a2) += h;
      (j == 0 ? m.a1 : m.a2) -= h;
      const Vec3 t = (cylinder_frame(tool, p).translation() - cylinder_frame(tool, m).translation()) / (2 * h);
      EXPECT_LT(std::abs(t.dot(T.linear().col(2))), 1e-8);
    }
  }
}

TEST(CylinderFrame, DomainError) {
  const ToolGeom tool;
  EXPECT_THROW(cylinder_frame(tool, {-1.0, 0.0, 0.0}), DomainError);
  EXPECT_THROW(cylinder_frame(tool, {151.0, 0.0, 0.0}), DomainError);
}

TEST(CylinderFrame, SpinRotatesAboutNormal) {
  const ToolGeom tool;
  const Transform A = cylinder_frame(tool, {20.0, 0.4, 0.0});
  const Transform B = cylinder_frame(tool, {20.0, 0.4, 0.7});
  EXPECT_LT((A.linear().col(2) - B.linear().col(2)).norm(), 1e-14);
  EXPECT_NEAR(A.linear().col(0).dot(B.linear().col(0)), std::cos(0.7), 1e-14);
  EXPECT_NEAR(A.linear().col(1).dot(B.linear().col(0)), std::sin(0.7), 1e-14);
}

TEST(CapsuleFrame, BodyPointIsRadial) {
  const Transform T = capsule_frame(8.0, 30.0, {15.0, 0.0, 0.0});
  EXPECT_LT((T.translation() - Vec3(8, 0, 15)).norm(), 1e-12);
  EXPECT_LT((T.linear().col(2) - Vec3(-1, 0, 0)).norm(), 1e-12);
}

TEST(CapsuleFrame, PoleIsApex) {
  const double r = 8.0, L = 30.0;
  const Transform T = capsule_frame(r, L, {L + kPi * r / 2.0, 0.3, 0.0});
  EXPECT_LT((T.translation() - Vec3(0, 0, L + r)).norm(), 1e-12);
  EXPECT_LT((T.linear().col(2) - Vec3(0, 0, -1)).norm(), 1e-12);
  expectRotation(T.linear());
}

TEST(CapsuleFrame, SeamIsContinuous) {
  const double r = 6.0, L = 25.0;
  for (double a2 : {-2.0, 0.0, 1.3}) {
    for (double eps : {1e-3, 1e-5}) {
      const Transform A = capsule_frame(r, L, {L - eps, a2, 0.0});
      const Transform B = capsule_frame(r, L, {L + eps, a2, 0.0});
      EXPECT_LT((A.translation() - B.translation()).norm(), 3.0 * eps);
      EXPECT_LT((A.linear() - B.linear()).norm(), 3.0 * eps / r);
    }
  }
}

TEST(CapsuleFrame, DomainError) {
  EXPECT_THROW(capsule_frame(8.0, 30.0, {30.0 + kPi * 4.0 + 0.1, 0.0, 0.0}), DomainError);
  EXPECT_THROW(capsule_frame(8.0, 30.0, {-0.1, 0.0, 0.0}), DomainError);
}

TEST(CapsuleFrame, PatchFormsMatchDerivatives) {
  std::mt19937_64 rng(2);
  const double r = 7.0, L = 20.0;
  for (int k = 0; k < 100; ++k) {
    const double a1 = uniform(rng, 0.5, L + 0.45 * kPi * r);
    const double a2 = uniform(rng, -kPi, kPi);
    const SurfacePatch sp = capsulePatch(r, L, a1, a2);
    const double h = 1e-6;
    for (int j = 0; j < 2; ++j) {
      const double p1 = a1 + (j == 0 ? h : 0.0), p2 = a2 + (j == 1 ? h : 0.0);
      const double m1 = a1 - (j == 0 ? h : 0.0), m2 = a2 - (j == 1 ? h : 0.0);
      const SurfacePatch P = capsulePatch(r, L, p1, p2), M = capsulePatch(r, L, m1, m2);
      EXPECT_LT((sp.dp.col(j) - (P.p - M.p) / (2 * h)).norm(), 1e-6);
      EXPECT_LT((sp.dx.col(j) - (P.x() - M.x()) / (2 * h)).norm(), 1e-6);
      EXPECT_LT((sp.dy.col(j) - (P.y() - M.y()) / (2 * h)).norm(), 1e-6);
      EXPECT_LT((sp.dz.col(j) - (P.z() - M.z()) / (2 * h)).norm(), 1e-6);
    }
    // dp = [x y] M, dz = -[x y] K M, dx.y = T M
    Eigen::Matrix<double, 3, 2> XY;
    XY << sp.x(), sp.y();
    EXPECT_LT((sp.dp - XY * sp.metric).norm(), 1e-10);
    EXPECT_LT((sp.dz + XY * sp.curvature * sp.metric).norm(), 1e-10);
    EXPECT_LT((sp.y().transpose() * sp.dx - sp.torsion * sp.metric).norm(), 1e-10);
  }
}

TEST(FingerFK, StraightFingerReachesTotalLength) {
  const DesignParams d;
  const FingerJoints u;
  const SurfaceCoords pole{capsuleDomainEnd(d.finger_radius, d.distalBodyLength()), 0.0, 0.0};
  const Transform T = finger_fk(d, u, pole);
  EXPECT_LT((T.translation() - Vec3(0, 0, kTotalFingerLength)).norm(), 1e-10);
}

TEST(FingerFK, PlanarTwoLinkClosedForm) {
  const DesignParams d;
  const double Lp = d.proximalLength();
  const SurfaceCoords pole{capsuleDomainEnd(d.finger_radius, d.distalBodyLength()), 0.0, 0.0};
  {
    const Transform T = finger_fk(d, {0.0, 0.0, kPi / 2}, pole);
    EXPECT_LT((T.translation() - Vec3(0, -d.distal_length, Lp)).norm(), 1e-10);
  }
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    const double u1 = uniform(rng, -0.5, 1.6), u3 = uniform(rng, 0.0, 1.8);
    const Transform T = finger_fk(d, {u1, 0.0, u3}, pole);
    const Vec3 expected(0.0, -Lp * std::sin(u1) - d.distal_length * std::sin(u1 + u3),
                        Lp * std::cos(u1) + d.distal_length * std::cos(u1 + u3));
    EXPECT_LT((T.translation() - expected).norm(), 1e-10);
  }
}

TEST(FingerFK, AnalyticJacobianMatchesFiniteDifferences) {
  EXPECT_LT(test::worstFingerJacobianError(4, 100), 1e-6);
}

TEST(HandFK, LayoutAnchorsAndMirrorSymmetry) {
  const DesignParams d;
  const std::array<FingerJoints, kNumFingers> zero{};
  const HandGeometry g = hand_fk(d, HandPose{}, zero);
  EXPECT_LT((g.roots[0].translation() - Vec3(-d.palm_half_width, 0, d.palm_length)).norm(), 1e-12);
  EXPECT_LT((g.roots[1].translation() - Vec3(0, 0, d.palm_length)).norm(), 1e-12);
  EXPECT_LT((g.roots[2].translation() - Vec3(d.palm_half_width, 0, d.palm_length)).norm(), 1e-12);
  EXPECT_LT((g.roots[3].translation() - Vec3(-d.palm_half_width, 0, 0)).norm(), 1e-12);
  const Vec3 mirror(-1, 1, 1);
  for (int e = 0; e < 2; ++e) {
    const Capsule& a = g.capsules[0 + e];
    const Capsule& b = g.capsules[4 + e];
    EXPECT_LT((a.a.cwiseProduct(mirror) - b.a).norm(), 1e-12);
    EXPECT_LT((a.b.cwiseProduct(mirror) - b.b).norm(), 1e-12);
  }
}

TEST(HandFK, TranslationEquivariance) {
  std::mt19937_64 rng(5);
  const DesignParams d = randomDesign(rng);
  std::array<FingerJoints, kNumFingers> u{};
  for (auto& j : u) j = {uniform(rng, -0.5, 1.6), uniform(rng, -0.5, 0.5), uniform(rng, 0, 1.8)};
  HandPose p{Vec3(1, 2, 3), Vec3(0.1, -0.2, 0.3)};
  HandPose q = p;
  const Vec3 t(4.0, -7.0, 2.5);
  q.translation += t;
  const HandGeometry a = hand_fk(d, p, u), b = hand_fk(d, q, u);
  for (int i = 0; i < 2 * kNumFingers; ++i) {
    EXPECT_LT((a.capsules[i].a + t - b.capsules[i].a).norm(), 1e-10);
    EXPECT_LT((a.capsules[i].b + t - b.capsules[i].b).norm(), 1e-10);
  }
}

TEST(HandFK, LinkLengthsArePreserved) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 100; ++k) {
    const DesignParams d = randomDesign(rng);
    std::array<FingerJoints, kNumFingers> u{};
    for (auto& j : u) j = {uniform(rng, -0.5, 1.6), uniform(rng, -0.5, 0.5), uniform(rng, 0, 1.8)};
    const HandPose p{Vec3(uniform(rng, -50, 50), uniform(rng, -50, 50), uniform(rng, -50, 50)),
                     Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1))};
    const HandGeometry g = hand_fk(d, p, u);
    expectRotation(g.palm.linear());
    for (int f = 0; f < kNumFingers; ++f) {
      EXPECT_NEAR((g.capsules[2 * f].b - g.capsules[2 * f].a).norm(), d.proximalLength(), 1e-10);
      EXPECT_NEAR((g.capsules[2 * f + 1].b - g.capsules[2 * f + 1].a).norm(), d.distalBodyLength(), 1e-10);
    }
  }
}

TEST(Standardize, CornersAndCentre) {
  const DesignBounds b;
  const Vec6 lo = standardize(DesignParams::fromVector(b.lo), b);
  EXPECT_LT((lo - Vec6::Constant(-0.5)).norm(), 1e-15);
  const Vec6 mid = standardize(DesignParams::fromVector(0.5 * (b.lo + b.hi)), b);
  EXPECT_LT(mid.norm(), 1e-15);
}

TEST(Standardize, RoundTrip) {
  const DesignBounds b;
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const DesignParams d = randomDesign(rng);
    const DesignParams back = destandardize(standardize(d, b), b);
    worst = std::max(worst, ((back.vector() - d.vector()).array() / d.vector().array().abs().max(1.0)).abs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Standardize, OutOfBoundsThrows) {
  const DesignBounds b;
  DesignParams d = DesignParams::fromVector(b.hi);
  d.palm_length += 1.0;
  EXPECT_THROW(standardize(d, b), OutOfBoundsError);
}

TEST(Design, Validation) {
  DesignParams d;
  EXPECT_NO_THROW(validateDesign(d));
  d.palm_half_width = d.finger_radius - 1.0;
  EXPECT_THROW(validateDesign(d), DomainError);
  d = DesignParams{};
  d.distal_length = kTotalFingerLength;
  EXPECT_THROW(validateDesign(d), DomainError);
}
