#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "poba/bal_io.hpp"
#include "poba/landmark_blocks.hpp"

namespace poba {

/// One solver run on one problem, reduced to what profiles need.
struct RunRecord {
  std::string problem;
  std::string solver;
  double f0 = 0.0;
  std::vector<std::pair<double, double>> trace;  // (time_s, cost)
  std::size_t peak_bytes = 0;

  double final_cost() const { return trace.back().second; }

  static RunRecord from_trace(const SolverTrace& t) {
    if (t.records.empty()) throw std::invalid_argument("RunRecord: empty trace");
    RunRecord r;
    r.problem = t.problem;
    r.solver = t.solver;
    r.f0 = t.records.front().cost;
    for (const auto& rec : t.records) r.trace.emplace_back(rec.cumulative_time_s, rec.cost);
    r.peak_bytes = t.peak_bytes();
    return r;
  }
};

inline constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();

/// f_tau(p) = f*(p) + tau (f0(p) - f*(p)), f* the best final cost.
inline double cost_threshold(const std::vector<RunRecord>& runs_of_problem,
                             double tau) {
  if (runs_of_problem.empty()) throw std::invalid_argument("cost_threshold: no records");
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("cost_threshold: tau must be in (0, 1)");
  const double f0 = runs_of_problem.front().f0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : runs_of_problem) {
    if (r.problem != runs_of_problem.front().problem)
      throw std::invalid_argument("cost_threshold: records span several problems");
    if (std::abs(r.f0 - f0) > 1e-12 * std::max(1.0, std::abs(f0)))
      throw std::invalid_argument("cost_threshold: inconsistent initial cost for problem " +
                                  r.problem);
    if (r.trace.empty()) throw std::invalid_argument("cost_threshold: empty trace");
    best = std::min(best, r.final_cost());
  }
  return best + tau * (f0 - best);
}

/// First recorded time whose cost is at or below threshold; infinity if none.
inline double time_to_threshold(const RunRecord& run, double threshold) {
  for (const auto& [t, c] : run.trace)
    if (c <= threshold) return t;
  return kInfiniteTime;
}

struct ProfileCurve {
  std::string solver;
  double tau = 0.0;
  std::vector<std::pair<double, double>> points;  // (alpha, rho percent)
};

/// Logarithmically spaced alphas on [1, max_alpha], both ends included.
inline std::vector<double> default_alpha_grid(std::size_t n = 64, double max_alpha = 32.0) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = std::pow(max_alpha, static_cast<double>(i) / static_cast<double>(n - 1));
  g.front() = 1.0;
  g.back() = max_alpha;
  return g;
}

/// Runtime-to-threshold table T[problem][solver].
inline std::map<std::string, std::map<std::string, double>> threshold_times(
    const std::vector<RunRecord>& records, double tau) {
  if (records.empty()) throw std::invalid_argument("performance profile: no records");
  std::map<std::string, std::vector<RunRecord>> by_problem;
  std::set<std::string> solvers;
  for (const auto& r : records) {
    by_problem[r.problem].push_back(r);
    solvers.insert(r.solver);
  }
  std::map<std::string, std::map<std::string, double>> times;
  for (const auto& [p, runs] : by_problem) {
    std::set<std::string> present;
    for (const auto& r : runs)
      if (!present.insert(r.solver).second)
        throw std::invalid_argument("duplicate record for " + p + "/" + r.solver);
    if (present != solvers)
      throw std::invalid_argument("problem " + p + " lacks a record for some solver");
    const double thr = cost_threshold(runs, tau);
    for (const auto& r : runs) times[p][r.solver] = time_to_threshold(r, thr);
  }
  return times;
}

/// rho(s, alpha) = 100/|P| * |{p : T(p,s) <= alpha * min_s T(p,s)}|.
inline std::vector<ProfileCurve> performance_profile(const std::vector<RunRecord>& records,
                                                     double tau,
                                                     const std::vector<double>& alpha_grid) {
  if (alpha_grid.empty() || alpha_grid.front() < 1.0 ||
      !std::is_sorted(alpha_grid.begin(), alpha_grid.end()))
    throw std::invalid_argument("alpha grid must be ascending and start at >= 1");
  const auto times = threshold_times(records, tau);
  std::set<std::string> solvers;
  for (const auto& r : records) solvers.insert(r.solver);

  std::vector<ProfileCurve> curves;
  const double n_problems = static_cast<double>(times.size());
  for (const auto& s : solvers) {
    ProfileCurve curve;
    curve.solver = s;
    curve.tau = tau;
    for (double alpha : alpha_grid) {
      std::size_t count = 0;
      for (const auto& [p, row] : times) {
        double best = kInfiniteTime;
        for (const auto& [_, t] : row) best = std::min(best, t);
        const double t = row.at(s);
        if (std::isfinite(t) && t <= alpha * best) ++count;
      }
      curve.points.emplace_back(alpha, 100.0 * static_cast<double>(count) / n_problems);
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

inline void write_profile_csv(const std::vector<ProfileCurve>& curves, std::ostream& out) {
  out << "alpha,solver,rho_percent\n";
  for (const auto& c : curves)
    for (const auto& [a, rho] : c.points) out << a << ',' << c.solver << ',' << rho << '\n';
}

/// Solved-percentage table at alpha = 1, 3 and infinity for one tau.
inline void write_solved_table(const std::vector<RunRecord>& records, double tau,
                               std::ostream& out) {
  const auto c = performance_profile(records, tau, {1.0, 3.0, std::numeric_limits<double>::max()});
  out << "tau=" << tau << "\n";
  out << "solver,alpha_1,alpha_3,alpha_inf\n";
  for (const auto& curve : c)
    out << curve.solver << ',' << curve.points[0].second << ',' << curve.points[1].second << ','
        << curve.points[2].second << '\n';
}

/// Analytic resident bytes of an assembled system.
template <typename Scalar>
StorageAccount memory_account(const DampedSystem<Scalar>& sys) {
  return sys.storage_account();
}

}  // namespace poba
