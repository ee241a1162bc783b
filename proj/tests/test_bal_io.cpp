#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "poba/bal_io.hpp"
#include "poba/lm_optimizer.hpp"
#include "test_support.hpp"

namespace poba {
namespace {

std::string tiny_bal() {
  std::ostringstream s;
  s << "2 1 2\n0 0 -1.5 2.0e1\n1 0 3.25 -4\n";
  for (int c = 0; c < 2; ++c) {
    s << "0.01\n-0.02\n0.03\n" << c << "\n0.5\n-2\n500\n-1e-2\n1e-3\n";
  }
  s << "0.1 0.2 -3\n";
  return s.str();
}

TEST(ParseBal, TinyProblem) {
  std::istringstream in(tiny_bal());
  const auto parsed = parse_bal(in);
  const auto& p = parsed.problem;
  EXPECT_EQ(p.num_cameras(), 2u);
  EXPECT_EQ(p.num_points(), 1u);
  EXPECT_EQ(p.num_observations(), 2u);
  EXPECT_EQ(parsed.pruned_cameras, 0u);
  EXPECT_DOUBLE_EQ(p.observations[0].pixel.y(), 20.0);
  EXPECT_DOUBLE_EQ(p.cameras[1].translation.x(), 1.0);
  EXPECT_DOUBLE_EQ(p.cameras[1].focal, 500.0);
  EXPECT_DOUBLE_EQ(p.cameras[0].k2, 1e-3);
  EXPECT_DOUBLE_EQ(p.points[0].z(), -3.0);
  EXPECT_NO_THROW(validate(p));
}

TEST(ParseBal, OutOfRangeIndexReportsLine) {
  std::istringstream in("1 1 1\n0 5 0.0 0.0\n");
  try {
    parse_bal(in);
    FAIL() << "expected a parse error";
  } catch (const BalParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("out of range"), std::string::npos);
  }
}

TEST(ParseBal, TruncatedStream) {
  std::string s = tiny_bal();
  s.resize(s.size() - 6);
  std::istringstream in(s);
  EXPECT_THROW(parse_bal(in), BalParseError);
}

TEST(ParseBal, NonNumericTokenReportsLine) {
  std::istringstream in("1 1 1\n0 0 1.0 abc\n");
  try {
    parse_bal(in);
    FAIL();
  } catch (const BalParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseBal, DuplicateObservationRejected) {
  std::istringstream in("1 1 2\n0 0 1 1\n0 0 2 2\n");
  EXPECT_THROW(parse_bal(in), BalParseError);
}

TEST(ParseBal, PrunesUnreferencedEntities) {
  std::ostringstream s;
  s << "3 3 2\n2 0 1 1\n2 2 3 3\n";
  for (int c = 0; c < 3; ++c) s << "0 0 0 0 0 0 " << 100 + c << " 0 0\n";
  s << "1 1 1\n2 2 2\n3 3 3\n";
  std::istringstream in(s.str());
  const auto parsed = parse_bal(in);
  EXPECT_EQ(parsed.pruned_cameras, 2u);
  EXPECT_EQ(parsed.pruned_points, 1u);
  ASSERT_EQ(parsed.problem.num_cameras(), 1u);
  EXPECT_DOUBLE_EQ(parsed.problem.cameras[0].focal, 102.0);
  ASSERT_EQ(parsed.problem.num_points(), 2u);
  EXPECT_EQ(parsed.problem.observations[1].point, 1u);
  EXPECT_DOUBLE_EQ(parsed.problem.points[1].x(), 3.0);
  EXPECT_NO_THROW(validate(parsed.problem));
}

TEST(ParseBal, SerializeRoundTripIsIdentity) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = testing::random_fixture(4, 12, seed);
    std::stringstream first;
    serialize_bal(p, first);
    const auto once = parse_bal(first).problem;
    std::stringstream second;
    serialize_bal(once, second);
    const auto twice = parse_bal(second).problem;
    EXPECT_EQ(once, p);
    EXPECT_EQ(twice, once);
  }
}

TEST(Perturb, ZeroSigmaIsBitIdentical) {
  const auto p = testing::random_fixture(3, 8, 4);
  EXPECT_EQ(perturb(p, 0.0, 7), p);
}

TEST(Perturb, DeterministicForSeed) {
  const auto p = testing::random_fixture(3, 8, 4);
  EXPECT_EQ(perturb(p, 0.01, 1), perturb(p, 0.01, 1));
  EXPECT_NE(perturb(p, 0.01, 1), perturb(p, 0.01, 2));
}

TEST(Perturb, NegativeSigmaRejected) {
  const auto p = testing::random_fixture(3, 8, 4);
  EXPECT_THROW(perturb(p, -1.0, 1), std::invalid_argument);
}

TEST(Perturb, TouchesOnlyPointsAndTranslations) {
  const auto p = testing::random_fixture(5, 20, 6);
  const auto q = perturb(p, 0.1, 3);
  EXPECT_EQ(q.observations, p.observations);
  for (std::size_t c = 0; c < p.num_cameras(); ++c) {
    EXPECT_EQ(q.cameras[c].rotation, p.cameras[c].rotation);
    EXPECT_EQ(q.cameras[c].focal, p.cameras[c].focal);
    EXPECT_EQ(q.cameras[c].k1, p.cameras[c].k1);
    EXPECT_EQ(q.cameras[c].k2, p.cameras[c].k2);
    EXPECT_NE(q.cameras[c].translation, p.cameras[c].translation);
  }
  for (std::size_t l = 0; l < p.num_points(); ++l) EXPECT_NE(q.points[l], p.points[l]);
}

TEST(Perturb, NoiseMatchesGaussianLaw) {
  // 3300 points and 34 cameras: 9900 + 102 = 10002 perturbed coordinates.
  const auto p = testing::random_fixture(34, 3300, 8);
  const double sigma = 0.05;
  const auto q = perturb(p, sigma, 11);
  std::vector<double> d;
  for (std::size_t l = 0; l < p.num_points(); ++l)
    for (int k = 0; k < 3; ++k) d.push_back(q.points[l][k] - p.points[l][k]);
  for (std::size_t c = 0; c < p.num_cameras(); ++c)
    for (int k = 0; k < 3; ++k) d.push_back(q.cameras[c].translation[k] - p.cameras[c].translation[k]);
  ASSERT_GE(d.size(), 10000u);
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(d.size() - 1));
  EXPECT_NEAR(sd, sigma, 0.05 * sigma);
  // mean within 4 standard errors of zero
  EXPECT_LT(std::abs(mean), 4.0 * sigma / std::sqrt(static_cast<double>(d.size())));
}

TEST(Trace, SingleRecordGivesTwoLines) {
  SolverTrace t;
  t.records.push_back(TraceRecord{});
  std::ostringstream out;
  write_trace(t, out);
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 2);
  EXPECT_EQ(s.rfind("iter,cumulative_time_s,cost,inner_iterations,order_m,peak_bytes", 0), 0u);
}

TEST(Trace, EmptyTraceRejected) {
  std::ostringstream out;
  EXPECT_THROW(write_trace(SolverTrace{}, out), std::invalid_argument);
}

TEST(Trace, WriteReadRoundTrip) {
  SolverTrace t;
  for (int i = 0; i < 4; ++i) {
    TraceRecord r;
    r.iter = i;
    r.cumulative_time_s = 0.1 * i + 1.0 / 3.0;
    r.cost = 1234.5678901234567 / (i + 1);
    r.inner_iterations = 3 * i;
    r.order_m = i;
    r.peak_bytes = 1000u + static_cast<std::size_t>(i);
    r.lambda = 1e-4 * std::pow(2.0, i);
    r.accepted = i % 2 == 0;
    r.max_order_hit = i == 3;
    r.invalid_observations = static_cast<std::size_t>(i);
    t.records.push_back(r);
  }
  std::stringstream io;
  write_trace(t, io);
  EXPECT_EQ(read_trace(io).records, t.records);
}

TEST(Trace, CostColumnNonIncreasingOnConvergedRun) {
  const auto p = perturb(testing::random_fixture(4, 15, 2), 0.01, 1);
  LmConfig cfg;
  const auto res = run(p, cfg);
  std::stringstream io;
  write_trace(res.trace, io);
  const auto back = read_trace(io);
  ASSERT_GE(back.records.size(), 2u);
  double prev = back.records.front().cost;
  for (const auto& r : back.records) {
    EXPECT_LE(r.cost, prev);
    prev = r.cost;
  }
}

TEST(Summary, JsonFields) {
  SolverTrace t;
  t.problem = "p";
  t.solver = "poba64";
  TraceRecord a, b;
  a.cost = 10;
  b.cost = 4;
  b.cumulative_time_s = 2.5;
  b.peak_bytes = 77;
  t.records = {a, b};
  const auto j = summary_json(t);
  EXPECT_EQ(j["problem"], "p");
  EXPECT_EQ(j["solver"], "poba64");
  EXPECT_DOUBLE_EQ(j["final_cost"].get<double>(), 4.0);
  EXPECT_DOUBLE_EQ(j["total_time_s"].get<double>(), 2.5);
  EXPECT_EQ(j["peak_bytes"].get<std::size_t>(), 77u);
}

}  // namespace
}  // namespace poba
