#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "direp/geometry.hpp"

using namespace direp;

namespace {

constexpr double kPi = std::numbers::pi;

const GeometryInstance kCanonical{{1, 0, 0}, {0, 1, 0}};

// Rotation about a random unit axis by a random angle (Rodrigues).
Vec3 rotate(const Vec3& v, const Vec3& axis, double angle) {
  return std::cos(angle) * v + std::sin(angle) * cross(axis, v) + (dot(axis, v) * (1 - std::cos(angle))) * axis;
}

GeometryInstance random_instance(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.1, 10.0);
  auto unit = [&] {
    Vec3 v{g(rng), g(rng), g(rng)};
    return (1.0 / norm(v)) * v;
  };
  const double len = r(rng);
  return {len * unit(), len * unit()};
}

}  // namespace

TEST(Decompose, Canonical) {
  const auto d = vaegan_decompose(kCanonical);
  EXPECT_EQ(d.direp, (Vec3{0.5, 0.5, 0}));
  EXPECT_NEAR(norm(d.direp), 0.7071067811865476, 1e-15);
  EXPECT_EQ(d.ddrep_source, (Vec3{0.5, -0.5, 0}));
  EXPECT_EQ(d.ddrep_target, (Vec3{-0.5, 0.5, 0}));
  EXPECT_FALSE(d.degenerate);
  EXPECT_NEAR(dot(d.direp, d.ddrep_source), 0.0, 1e-15);
}

TEST(Decompose, EqualVectorsAreFlaggedNotRejected) {
  const auto d = vaegan_decompose({{0.3, -2, 1}, {0.3, -2, 1}});
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.direp, (Vec3{0.3, -2, 1}));
  EXPECT_EQ(d.ddrep_source, (Vec3{0, 0, 0}));
  EXPECT_EQ(d.ddrep_target, (Vec3{0, 0, 0}));
}

TEST(Decompose, InvalidInstancesThrow) {
  EXPECT_THROW(vaegan_decompose({{1, 0, 0}, {0, 1.1, 0}}), GeometryError);
  EXPECT_THROW(vaegan_decompose({{1, 0, 0}, {-1, 0, 0}}), GeometryError);
  EXPECT_THROW(vaegan_decompose({{0, 0, 0}, {0, 0, 0}}), GeometryError);
  EXPECT_THROW(vaegan_decompose({{NAN, 0, 0}, {0, 1, 0}}), GeometryError);
}

TEST(CirclePoint, Examples) {
  const Vec3 v = vaegan_decompose(kCanonical).direp;
  const Vec3 top = circle_point(kCanonical, kPi / 2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(top[i], v[i], 1e-16);
  EXPECT_NEAR(norm(circle_point(kCanonical, kPi / 6)), 0.5 * norm(v), 1e-15);
  for (double theta : {0.1, 0.7, 1.3}) {
    const Vec3 d = circle_point(kCanonical, theta);
    EXPECT_NEAR(dot(d, d - v), 0.0, 1e-15);
  }
  EXPECT_THROW(circle_point(kCanonical, 0.0), GeometryError);
  EXPECT_THROW(circle_point(kCanonical, 1.6), GeometryError);
  EXPECT_THROW(circle_point({{1, 0, 0}, {1, 0, 0}}, 1.0), GeometryError);
}

TEST(Residual, CircleVersusOffCircle) {
  const Vec3 v = vaegan_decompose(kCanonical).direp;
  const auto at_v = orthogonality_residual(kCanonical, v);
  EXPECT_EQ(at_v[0], 0.0);
  EXPECT_EQ(at_v[1], 0.0);
  // At D = 2V both residuals equal |V| / |T|, small only when S and T nearly oppose.
  std::mt19937_64 rng(3);
  int generic = 0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = random_instance(rng);
    const Vec3 v2 = vaegan_decompose(inst).direp;
    const auto r = orthogonality_residual(inst, 2.0 * v2);
    EXPECT_NEAR(r[0], norm(v2) / norm(inst.T), 1e-12);
    EXPECT_NEAR(r[1], norm(v2) / norm(inst.T), 1e-12);
    if (dot(inst.S, inst.T) > -0.95 * dot(inst.S, inst.S)) {
      ++generic;
      EXPECT_GT(std::max(r[0], r[1]), 0.1);
    }
  }
  EXPECT_GT(generic, 180);
  EXPECT_THROW(orthogonality_residual(kCanonical, {0, 0, 0}), GeometryError);
}

TEST(DdrepSize, MidpointGivesSegmentLength) {
  const Vec3 v = vaegan_decompose(kCanonical).direp;
  EXPECT_NEAR(ddrep_size(kCanonical, v), std::sqrt(2.0), 1e-15);
  std::size_t best = 0;
  double best_size = INFINITY;
  for (std::size_t i = 1; i <= 10000; ++i) {
    const double s = ddrep_size(kCanonical, circle_point(kCanonical, (kPi / 2) * static_cast<double>(i) / 10000));
    if (s < best_size) {
      best_size = s;
      best = i;
    }
  }
  EXPECT_EQ(best, 10000u);
}

TEST(Verify, CanonicalPasses) {
  const auto report = verify_claims(kCanonical, 1000);
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_residual, 1e-9);
  EXPECT_LT(report.max_sine_error, 1e-9);
  EXPECT_NEAR(report.argmin_theta, kPi / 2, 1e-12);
  EXPECT_TRUE(report.od_monotone);
  EXPECT_EQ(report.sweep.size(), 1000u);
  EXPECT_TRUE(report.diagnostics.empty());
}

TEST(Verify, RotationAndScaleInvariant) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  const auto base = verify_claims(kCanonical, 200);
  for (int i = 0; i < 20; ++i) {
    Vec3 axis{g(rng), g(rng), g(rng)};
    axis = (1.0 / norm(axis)) * axis;
    const double angle = 3 * g(rng), scale = std::exp(g(rng));
    const GeometryInstance inst{scale * rotate(kCanonical.S, axis, angle), scale * rotate(kCanonical.T, axis, angle)};
    const auto report = verify_claims(inst, 200);
    EXPECT_TRUE(report.passed);
    EXPECT_EQ(report.argmin_theta, base.argmin_theta);
    for (std::size_t k = 0; k < 200; k += 37) {
      EXPECT_NEAR(report.sweep[k].od_norm / scale, base.sweep[k].od_norm, 1e-12);
    }
  }
}

TEST(Verify, PerturbedNormIsReportedNotRun) {
  const auto report = verify_claims({{1, 0, 0}, {0, 1.1, 0}}, 100);
  EXPECT_FALSE(report.passed);
  EXPECT_TRUE(report.sweep.empty());
  ASSERT_FALSE(report.diagnostics.empty());
  EXPECT_FALSE(instance_problems({{1, 0, 0}, {0, 1.1, 0}}).empty());
  EXPECT_TRUE(instance_problems(kCanonical).empty());
}

TEST(Verify, HundredRandomInstances) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const auto report = verify_claims(random_instance(rng), 1000);
    ASSERT_TRUE(report.passed) << "instance " << i << ": "
                               << (report.diagnostics.empty() ? "" : report.diagnostics.front());
    EXPECT_NEAR(report.argmin_theta, kPi / 2, 1e-12);
  }
}
