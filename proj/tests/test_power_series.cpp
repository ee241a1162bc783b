#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace poba {
namespace {

using testing::dense_normal_equations;
using testing::rel_diff;
using testing::ScalarSystem;

VecX vec(std::initializer_list<double> v) {
  VecX out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(StopCriterion, FiresBelowEpsilon) {
  // (1 + 1) * 0.004 / 1 = 0.008 < 0.01
  EXPECT_TRUE(stop_criterion(vec({1.0, 0.0}), vec({0.996, 0.0}), 1, 0.01));
}

TEST(StopCriterion, HoldsAtOrAboveEpsilon) {
  // (1 + 1) * 0.006 / 1 = 0.012
  EXPECT_FALSE(stop_criterion(vec({1.0, 0.0}), vec({0.994, 0.0}), 1, 0.01));
}

TEST(StopCriterion, OrderWeightGrows) {
  // 0.004 relative change passes at i = 1 but not at i = 3: 4 * 0.004 = 0.016
  EXPECT_FALSE(stop_criterion(vec({1.0}), vec({0.996}), 3, 0.01));
}

TEST(StopCriterion, RejectsOrderZeroAndZeroIterate) {
  EXPECT_THROW(stop_criterion(vec({1.0}), vec({1.0}), 0, 0.01), std::invalid_argument);
  EXPECT_THROW(stop_criterion(vec({0.0}), vec({1.0}), 2, 0.01), std::invalid_argument);
}

TEST(PowerSeries, ScalarGeometricSeries) {
  ScalarSystem s;  // P = 1/2, S^-1(-b̃) = 2
  for (int m = 0; m <= 10; ++m) {
    const VecX x = apply_truncated_inverse(s, VecX::Constant(1, 1.0), m);
    EXPECT_NEAR(x[0], 2.0 - std::pow(0.5, m), 1e-15);
  }
}

TEST(PowerSeries, ScalarStopsAtFirstSatisfyingOrder) {
  ScalarSystem s;
  const auto res = power_series_solve(s, 0.01, 100);
  int expected = 1;
  for (;; ++expected) {
    const double xi = 2.0 - std::pow(0.5, expected);
    if ((expected + 1) * std::pow(0.5, expected) / xi < 0.01) break;
  }
  EXPECT_EQ(res.order_used, expected);
  EXPECT_FALSE(res.max_order_hit);
  EXPECT_NEAR(res.delta_p[0], 2.0 - std::pow(0.5, expected), 1e-15);
}

TEST(PowerSeries, FourPassesPerOrder) {
  ScalarSystem s;
  for (int m = 0; m <= 6; ++m) {
    s.passes = 0;
    apply_truncated_inverse(s, VecX::Constant(1, 1.0), m);
    EXPECT_EQ(s.passes, static_cast<std::size_t>(1 + 4 * m));
  }
}

TEST(PowerSeries, MaxOrderFlag) {
  ScalarSystem s;
  const auto res = power_series_solve(s, 1e-12, 5);
  EXPECT_TRUE(res.max_order_hit);
  EXPECT_EQ(res.order_used, 5);
}

TEST(PowerSeries, ZeroRightHandSide) {
  ScalarSystem s;
  s.b_tilde = 0.0;
  const auto res = power_series_solve(s, 0.01, 20);
  EXPECT_EQ(res.order_used, 0);
  EXPECT_EQ(res.delta_p[0], 0.0);
}

TEST(PowerSeries, RejectsBadArguments) {
  ScalarSystem s;
  EXPECT_THROW(power_series_solve(s, 0.0, 20), std::invalid_argument);
  EXPECT_THROW(power_series_solve(s, 0.01, 0), std::invalid_argument);
  EXPECT_THROW(apply_truncated_inverse(s, VecX::Ones(1), -1), std::invalid_argument);
}

TEST(PowerSeries, DisjointSystemStopsAtFirstOrder) {
  const auto sys = testing::disjoint_system(4, 9, 1e-2);
  const auto res = power_series_solve(sys, 0.01, 20);
  EXPECT_EQ(res.order_used, 1);
  EXPECT_LT(rel_diff(res.delta_p, sys.apply_U_inv(VecX(-sys.compute_b_tilde()))), 1e-15);
}

TEST(PowerSeries, DisjointBackSubstitution) {
  const auto sys = testing::disjoint_system(4, 9, 1e-2);
  const auto res = power_series_solve(sys, 0.01, 20);
  const VecX dl = back_substitute(sys, res.delta_p);
  EXPECT_LT(rel_diff(dl, sys.apply_V_inv(VecX(-sys.b_l()))), 1e-15);
}

TEST(PowerSeries, ZerothOrderIsBlockJacobi) {
  const auto p = testing::random_fixture(5, 30, 41);
  const auto sys = assemble<double>(p, 1e-2);
  const auto d = dense_normal_equations(p, 1e-2);
  const VecX x0 = apply_truncated_inverse(sys, VecX(-sys.compute_b_tilde()), 0);
  EXPECT_LT(rel_diff(x0, VecX(-d.U().inverse() * d.b_tilde())), 1e-10);
}

TEST(PowerSeries, ConvergesToDenseSolution) {
  // Strong damping keeps the spectral radius well below one.
  const auto p = testing::random_fixture(6, 40, 42);
  const auto sys = assemble<double>(p, 1.0);
  const auto d = dense_normal_equations(p, 1.0);
  const VecX exact = d.schur().ldlt().solve(VecX(-d.b_tilde()));
  bool reached = false;
  for (int m = 0; m <= 50 && !reached; ++m) {
    const VecX x = apply_truncated_inverse(sys, VecX(-sys.compute_b_tilde()), m);
    reached = rel_diff(x, exact) < 1e-8;
  }
  EXPECT_TRUE(reached);
}

TEST(PowerSeries, ErrorDecreasesWithOrder) {
  const auto p = testing::random_fixture(6, 40, 43);
  const auto sys = assemble<double>(p, 1e-2);
  const auto d = dense_normal_equations(p, 1e-2);
  const VecX exact = d.schur().ldlt().solve(VecX(-d.b_tilde()));
  // The error in the U-norm is monotone since P is U-self-adjoint with
  // spectrum in [0, 1).
  const MatX U = d.U();
  double prev = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= 20; ++m) {
    const VecX e = apply_truncated_inverse(sys, VecX(-sys.compute_b_tilde()), m) - exact;
    const double err = std::sqrt(e.dot(U * e));
    EXPECT_LE(err, prev * (1 + 1e-12));
    prev = err;
  }
}

TEST(BackSubstitution, SatisfiesFullNormalEquations) {
  const auto p = testing::random_fixture(5, 30, 44);
  const auto sys = assemble<double>(p, 1e-3);
  const auto d = dense_normal_equations(p, 1e-3);
  const VecX dp = d.schur().ldlt().solve(VecX(-d.b_tilde()));
  const VecX dl = back_substitute(sys, dp);
  VecX full(dp.size() + dl.size());
  full << dp, dl;
  const VecX res = d.h * full + d.b;
  EXPECT_LT(res.norm() / d.b.norm(), 1e-8);
}

TEST(PowerSeries, NonFiniteIterateThrows) {
  ScalarSystem s;
  s.u = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(power_series_solve(s, 0.01, 20), InvariantError);
}

}  // namespace
}  // namespace poba
