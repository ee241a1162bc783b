#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace poba {
namespace {

BalProblem noisy_problem(std::uint64_t seed = 1) {
  return testing::random_fixture(4, 10, seed);
}

TEST(EvaluateCost, HalfSquaredNorm) {
  BalProblem p;
  p.cameras.push_back(CameraParams{});
  p.points.emplace_back(0.0, 0.0, -1.0);
  p.observations.push_back({0, 0, Vec2(-3.0, -4.0)});
  EXPECT_DOUBLE_EQ(evaluate_cost(p), 12.5);
}

TEST(EvaluateCost, ZeroAtExactObservations) {
  auto p = noisy_problem();
  for (auto& o : p.observations) o.pixel = *project(p.cameras[o.camera], p.points[o.point]);
  EXPECT_EQ(evaluate_cost(p), 0.0);
}

TEST(EvaluateCost, MatchesStackedResidual) {
  const auto p = noisy_problem(2);
  const auto d = testing::dense_normal_equations(p, 1.0);
  EXPECT_NEAR(evaluate_cost(p), 0.5 * d.residual.squaredNorm(), 1e-9 * evaluate_cost(p));
}

TEST(EvaluateCost, CountsZeroDepthObservations) {
  BalProblem p;
  p.cameras.push_back(CameraParams{});
  p.points.emplace_back(1.0, 1.0, 0.0);
  p.observations.push_back({0, 0, Vec2(1.0, 1.0)});
  std::size_t invalid = 0;
  EXPECT_EQ(evaluate_cost(p, &invalid), 0.0);
  EXPECT_EQ(invalid, 1u);
}

TEST(ApplyUpdate, ZeroUpdateIsIdentity) {
  const auto p = noisy_problem();
  const auto q = apply_update(p, VecX::Zero(9 * 4), VecX::Zero(3 * 10));
  EXPECT_DOUBLE_EQ(evaluate_cost(p), evaluate_cost(q));
  EXPECT_THROW(apply_update(p, VecX::Zero(5), VecX::Zero(30)), std::invalid_argument);
}

TEST(Lm, StationaryProblemStopsImmediately) {
  auto p = noisy_problem();
  for (auto& o : p.observations) o.pixel = *project(p.cameras[o.camera], p.points[o.point]);
  const auto res = run(p, LmConfig{});
  EXPECT_EQ(res.trace.records.size(), 2u);
  EXPECT_EQ(res.trace.termination, "stationary");
  EXPECT_EQ(res.trace.final_cost(), 0.0);
}

TEST(Lm, AcceptedStepsStrictlyDecreaseCost) {
  const auto res = run(noisy_problem(3), LmConfig{});
  const auto& rec = res.trace.records;
  for (std::size_t i = 1; i < rec.size(); ++i) {
    if (rec[i].accepted)
      EXPECT_LT(rec[i].cost, rec[i - 1].cost);
    else
      EXPECT_EQ(rec[i].cost, rec[i - 1].cost);
  }
  EXPECT_LT(res.trace.final_cost(), res.trace.initial_cost());
}

TEST(Lm, PowerSeriesMatchesDirectSolver) {
  const auto p = noisy_problem(4);
  LmConfig direct;
  direct.solver = SolverKind::kDirect;
  direct.max_outer_iterations = 200;
  direct.relative_function_tolerance = 1e-12;
  LmConfig poba = direct;
  poba.solver = SolverKind::kPoba;
  poba.epsilon = 1e-6;
  poba.max_order = 400;
  const double fd = run(p, direct).trace.final_cost();
  const double fp = run(p, poba).trace.final_cost();
  EXPECT_LE(std::abs(fp - fd), 1e-4 * fd);
}

TEST(Lm, AllSolversReduceCost) {
  const auto p = noisy_problem(5);
  const double f0 = evaluate_cost(p);
  for (auto kind : {SolverKind::kPoba, SolverKind::kPcg, SolverKind::kPcgPower,
                    SolverKind::kDirect, SolverKind::kPost}) {
    LmConfig cfg;
    cfg.solver = kind;
    EXPECT_LT(run(p, cfg).trace.final_cost(), 0.01 * f0) << to_string(kind);
  }
}

TEST(Lm, BitwiseReproducible) {
  const auto p = testing::random_fixture(6, 300, 6);
  LmConfig cfg;
  cfg.max_outer_iterations = 10;
  const auto a = run(p, cfg);
  cfg.num_threads = 4;
  const auto b = run(p, cfg);
  ASSERT_EQ(a.trace.records.size(), b.trace.records.size());
  for (std::size_t i = 0; i < a.trace.records.size(); ++i)
    EXPECT_EQ(a.trace.records[i].cost, b.trace.records[i].cost);
  EXPECT_EQ(a.final_state.points, b.final_state.points);
}

TEST(Lm, SinglePrecisionCloseToDouble) {
  const auto p = testing::random_fixture(5, 40, 7);
  LmConfig cfg;
  const double f64 = run(p, cfg).trace.final_cost();
  cfg.precision = 32;
  const auto r32 = run(p, cfg);
  EXPECT_EQ(r32.trace.solver, "poba32");
  EXPECT_LE(std::abs(r32.trace.final_cost() - f64), 1e-2 * f64);
}

TEST(Lm, TerminatesOnFunctionTolerance) {
  LmConfig cfg;
  cfg.solver = SolverKind::kDirect;
  cfg.max_outer_iterations = 200;
  const auto res = run(noisy_problem(8), cfg);
  EXPECT_EQ(res.trace.termination, "function_tolerance");
}

TEST(LmConfig, Validation) {
  LmConfig cfg;
  cfg.precision = 16;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = LmConfig{};
  cfg.epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(parse_solver_kind("bogus"), std::invalid_argument);
  EXPECT_EQ(parse_solver_kind("pcg"), SolverKind::kPcg);
}

}  // namespace
}  // namespace poba
