#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace poba {
namespace {

using testing::dense_normal_equations;
using testing::rel_diff;

TEST(Pcg, ZeroRightHandSideTakesNoIterations) {
  auto p = testing::random_fixture(3, 10, 1);
  for (auto& o : p.observations) o.pixel = *project(p.cameras[o.camera], p.points[o.point]);
  const auto sys = assemble<double>(p, 1e-3);
  const auto rep = pcg_schur_jacobi(sys, 1e-6, 100);
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_EQ(rep.solution.norm(), 0.0);
}

TEST(Pcg, SchurJacobiMatchesDenseSolution) {
  const auto p = testing::random_fixture(6, 40, 2);
  const auto sys = assemble<double>(p, 1e-3);
  const auto d = dense_normal_equations(p, 1e-3);
  const VecX exact = d.schur().ldlt().solve(VecX(-d.b_tilde()));
  const auto rep = pcg_schur_jacobi(sys, 1e-12, 1000);
  EXPECT_LT(rel_diff(rep.solution, exact), 1e-6);
}

TEST(Pcg, SingleCameraConvergesInOneIteration) {
  const auto p = testing::random_fixture(1, 15, 3);
  const auto sys = assemble<double>(p, 1e-3);
  const auto rep = pcg_schur_jacobi(sys, 1e-6, 100);
  EXPECT_EQ(rep.iterations, 1);
}

TEST(Pcg, OrderZeroSeriesIsBlockJacobiOnU) {
  const auto sys = assemble<double>(testing::random_fixture(5, 30, 4), 1e-3);
  const auto a = pcg_power_series_preconditioner(sys, 0, 1e-8, 300);
  const auto b = pcg([&](const VecX& v) { return sys.apply_schur(v); },
                     [&](const VecX& v) { return sys.apply_U_inv(v); },
                     VecX(-sys.compute_b_tilde()), 1e-8, 300);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.solution, b.solution);
}

TEST(Pcg, IterationsNonIncreasingInSeriesOrder) {
  const auto sys = assemble<double>(testing::random_fixture(8, 80, 5), 1e-3);
  int prev = std::numeric_limits<int>::max();
  for (int m = 0; m <= 5; ++m) {
    const auto rep = pcg_power_series_preconditioner(sys, m, 1e-6, 500);
    EXPECT_LE(rep.iterations, prev) << "order " << m;
    prev = rep.iterations;
  }
}

TEST(Pcg, PreconditionerPassCount) {
  const auto sys = assemble<double>(testing::random_fixture(4, 20, 6), 1e-3);
  const VecX v = VecX::Ones(sys.pose_dim());
  for (int m = 0; m <= 4; ++m) {
    sys.reset_operator_passes();
    apply_truncated_inverse(sys, v, m);
    EXPECT_EQ(sys.operator_passes(), static_cast<std::size_t>(1 + 4 * m));
  }
}

TEST(Pcg, ResidualHistoryDecreasesOverall) {
  const auto sys = assemble<double>(testing::random_fixture(6, 50, 7), 1e-3);
  const auto rep = pcg_schur_jacobi(sys, 1e-8, 500);
  ASSERT_GE(rep.residual_history.size(), 2u);
  EXPECT_EQ(rep.residual_history.front(), 1.0);
  EXPECT_LT(rep.residual_history.back(), 1e-8);
  EXPECT_EQ(rep.final_relative_residual, rep.residual_history.back());
}

TEST(Pcg, IterationCapIsHonoured) {
  const auto sys = assemble<double>(testing::random_fixture(6, 50, 8), 1e-4);
  const auto rep = pcg_schur_jacobi(sys, 1e-30, 3);
  EXPECT_EQ(rep.iterations, 3);
}

TEST(Pcg, RejectsBadTolerance) {
  const auto sys = assemble<double>(testing::small_fixture(), 1e-3);
  EXPECT_THROW(pcg_schur_jacobi(sys, 0.0, 10), std::invalid_argument);
  EXPECT_THROW(pcg_power_series_preconditioner(sys, -1, 1e-6, 10), std::invalid_argument);
}

TEST(DenseDirect, SmallResidual) {
  const auto sys = assemble<double>(testing::random_fixture(6, 40, 9), 1e-4);
  const VecX x = dense_direct(sys);
  const VecX b = -sys.compute_b_tilde();
  EXPECT_LT((sys.apply_schur(x) - b).norm() / b.norm(), 1e-10);
}

TEST(DenseDirect, SizeGuard) {
  // 223 cameras -> 2007 pose unknowns.
  const auto sys = testing::disjoint_system(223, 230, 1.0);
  EXPECT_THROW(dense_direct(sys), std::length_error);
}

TEST(Solvers, AllThreeAgree) {
  const auto sys = assemble<double>(testing::random_fixture(6, 60, 10), 1.0);
  const VecX direct = dense_direct(sys);
  const auto cg = pcg_schur_jacobi(sys, 1e-12, 1000);
  const auto ps = power_series_solve(sys, 1e-12, 400);
  EXPECT_LT(rel_diff(cg.solution, direct), 1e-6);
  EXPECT_LT(rel_diff(ps.delta_p, direct), 1e-6);
}

}  // namespace
}  // namespace poba
