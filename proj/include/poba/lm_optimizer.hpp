#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "poba/bal_io.hpp"
#include "poba/baseline_solvers.hpp"
#include "poba/camera_model.hpp"
#include "poba/landmark_blocks.hpp"
#include "poba/post_cluster.hpp"
#include "poba/power_series.hpp"

namespace poba {

enum class SolverKind { kPoba, kPcg, kPcgPower, kDirect, kPost };

inline SolverKind parse_solver_kind(const std::string& s) {
  if (s == "poba") return SolverKind::kPoba;
  if (s == "pcg") return SolverKind::kPcg;
  if (s == "pcg-power") return SolverKind::kPcgPower;
  if (s == "direct") return SolverKind::kDirect;
  if (s == "post") return SolverKind::kPost;
  throw std::invalid_argument("unknown solver: " + s);
}

inline std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::kPoba: return "poba";
    case SolverKind::kPcg: return "pcg";
    case SolverKind::kPcgPower: return "pcg-power";
    case SolverKind::kDirect: return "direct";
    case SolverKind::kPost: return "post";
  }
  return "?";
}

struct LmConfig {
  double initial_lambda = 1e-4;
  int max_outer_iterations = 50;
  double relative_function_tolerance = 1e-6;
  double lambda_decrease = 2.0;
  double lambda_increase = 4.0;
  double max_lambda = 1e16;

  SolverKind solver = SolverKind::kPoba;
  // power series
  double epsilon = 0.01;
  int max_order = 20;
  // conjugate gradients
  double cg_tolerance = 1e-6;
  int cg_max_iterations = 500;
  int preconditioner_order = 2;
  // clustered variant
  std::size_t max_cluster_size = 100;

  int precision = 64;
  DampingMode damping = DampingMode::kJacobiScaled;
  int num_threads = 1;

  void validate() const {
    if (!(initial_lambda > 0.0) || !(relative_function_tolerance > 0.0) ||
        !(epsilon > 0.0) || !(cg_tolerance > 0.0))
      throw std::invalid_argument("LmConfig: tolerances must be > 0");
    if (max_outer_iterations < 1 || max_order < 1 || cg_max_iterations < 0 ||
        preconditioner_order < 0 || max_cluster_size < 1)
      throw std::invalid_argument("LmConfig: invalid iteration limits");
    if (!(lambda_decrease > 1.0) || !(lambda_increase > 1.0))
      throw std::invalid_argument("LmConfig: lambda factors must exceed 1");
    if (precision != 32 && precision != 64)
      throw std::invalid_argument("LmConfig: precision must be 32 or 64");
  }
};

/// 1/2 sum of squared residual norms. Zero-depth observations contribute 0
/// and are counted in invalid_observations.
inline double evaluate_cost(const BalProblem& state,
                            std::size_t* invalid_observations = nullptr) {
  double cost = 0.0;
  std::size_t invalid = 0;
  for (const auto& o : state.observations) {
    const auto pred = project(state.cameras[o.camera], state.points[o.point]);
    if (!pred) {
      ++invalid;
      continue;
    }
    cost += 0.5 * (*pred - o.pixel).squaredNorm();
  }
  if (invalid_observations) *invalid_observations = invalid;
  return cost;
}

/// State x ⊞ (dx_p, dx_l).
inline BalProblem apply_update(const BalProblem& state, const VecX& delta_p,
                               const VecX& delta_l) {
  check_size(delta_p.size(), static_cast<Eigen::Index>(kPoseDim * state.num_cameras()), "delta_p");
  check_size(delta_l.size(), static_cast<Eigen::Index>(kPointDim * state.num_points()), "delta_l");
  BalProblem out = state;
  for (std::size_t c = 0; c < out.num_cameras(); ++c)
    out.cameras[c] = box_plus(state.cameras[c],
                              delta_p.segment<kPoseDim>(static_cast<Eigen::Index>(kPoseDim * c)));
  for (std::size_t l = 0; l < out.num_points(); ++l)
    out.points[l] += delta_l.segment<3>(static_cast<Eigen::Index>(3 * l));
  return out;
}

struct LmResult {
  SolverTrace trace;
  BalProblem final_state;
};

struct InnerSolve {
  VecX delta_p;
  int inner_iterations = 0;
  int order = 0;
  bool max_order_hit = false;
  std::size_t workspace_bytes = 0;
};

template <typename Scalar>
InnerSolve solve_reduced_system(const DampedSystem<Scalar>& sys,
                                const LmConfig& cfg,
                                const std::optional<CameraClustering>& clustering) {
  InnerSolve out;
  const auto vec_bytes = static_cast<std::size_t>(sys.pose_dim()) * sizeof(double);
  switch (cfg.solver) {
    case SolverKind::kPoba: {
      auto r = power_series_solve(sys, cfg.epsilon, cfg.max_order);
      out.delta_p = std::move(r.delta_p);
      out.inner_iterations = out.order = r.order_used;
      out.max_order_hit = r.max_order_hit;
      out.workspace_bytes = 3 * vec_bytes;
      break;
    }
    case SolverKind::kPcg: {
      auto r = pcg_schur_jacobi(sys, cfg.cg_tolerance, cfg.cg_max_iterations);
      out.delta_p = std::move(r.solution);
      out.inner_iterations = r.iterations;
      out.workspace_bytes = 5 * vec_bytes + sys.num_cameras() * kPoseDim * kPoseDim * sizeof(double);
      break;
    }
    case SolverKind::kPcgPower: {
      auto r = pcg_power_series_preconditioner(sys, cfg.preconditioner_order,
                                               cfg.cg_tolerance, cfg.cg_max_iterations);
      out.delta_p = std::move(r.solution);
      out.inner_iterations = r.iterations;
      out.order = cfg.preconditioner_order;
      out.workspace_bytes = 7 * vec_bytes;
      break;
    }
    case SolverKind::kDirect: {
      out.delta_p = dense_direct(sys);
      const auto n = static_cast<std::size_t>(sys.pose_dim());
      out.workspace_bytes = 2 * n * n * sizeof(double);
      break;
    }
    case SolverKind::kPost: {
      auto r = solve_clustered(sys, *clustering, cfg.epsilon, cfg.max_order);
      out.delta_p = std::move(r.delta_p);
      for (int o : r.orders) {
        out.inner_iterations += o;
        out.order = std::max(out.order, o);
      }
      out.max_order_hit = r.max_order_hit;
      out.workspace_bytes = r.subsystem_bytes + 3 * vec_bytes;
      break;
    }
  }
  return out;
}

/// Levenberg-Marquardt with the configured reduced-camera-system solver.
/// Steps are accepted iff the cost decreases; lambda is divided by
/// lambda_decrease on success and multiplied by lambda_increase on failure.
template <typename Scalar>
LmResult run_lm(const BalProblem& problem, const LmConfig& cfg,
                std::uint64_t seed = 0) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  LmResult res;
  res.trace.solver = to_string(cfg.solver) + (cfg.precision == 32 ? "32" : "64");
  BalProblem state = problem;
  std::size_t invalid = 0;
  double cost = evaluate_cost(state, &invalid);
  if (!std::isfinite(cost)) throw std::runtime_error("initial cost is not finite");

  std::optional<CameraClustering> clustering;
  if (cfg.solver == SolverKind::kPost)
    clustering = cluster_cameras(problem, cfg.max_cluster_size, seed);

  TraceRecord r0;
  r0.iter = 0;
  r0.cost = cost;
  r0.lambda = cfg.initial_lambda;
  r0.invalid_observations = invalid;
  res.trace.records.push_back(r0);

  const AssembleOptions aopts{cfg.damping, cfg.num_threads};
  double lambda = cfg.initial_lambda;
  std::optional<DampedSystem<Scalar>> sys;
  res.trace.termination = "max_iterations";
  for (int it = 1; it <= cfg.max_outer_iterations; ++it) {
    if (!sys) {
      sys.emplace(assemble<Scalar>(state, lambda, aopts, &invalid));
    } else {
      sys->set_damping(lambda);
    }
    TraceRecord rec;
    rec.iter = it;
    rec.lambda = lambda;
    rec.invalid_observations = invalid;

    if (sys->b_p().squaredNorm() == 0.0 && sys->b_l().squaredNorm() == 0.0) {
      rec.cost = cost;
      rec.accepted = true;
      rec.peak_bytes = sys->storage_account().total();
      rec.cumulative_time_s = elapsed();
      res.trace.records.push_back(rec);
      res.trace.termination = "stationary";
      break;
    }

    const InnerSolve inner = solve_reduced_system(*sys, cfg, clustering);
    const VecX delta_l = back_substitute(*sys, inner.delta_p);
    BalProblem trial = apply_update(state, inner.delta_p, delta_l);
    std::size_t trial_invalid = 0;
    const double new_cost = evaluate_cost(trial, &trial_invalid);

    rec.inner_iterations = inner.inner_iterations;
    rec.order_m = inner.order;
    rec.max_order_hit = inner.max_order_hit;
    rec.peak_bytes = sys->storage_account().total() + inner.workspace_bytes;

    if (!std::isfinite(new_cost)) {
      rec.cost = cost;
      rec.accepted = false;
      rec.cumulative_time_s = elapsed();
      res.trace.records.push_back(rec);
      res.trace.termination = "non_finite_cost_at_iteration_" + std::to_string(it);
      break;
    }

    bool converged = false;
    if (new_cost < cost) {
      converged = (cost - new_cost) / cost < cfg.relative_function_tolerance;
      state = std::move(trial);
      cost = new_cost;
      invalid = trial_invalid;
      lambda /= cfg.lambda_decrease;
      sys.reset();
      rec.accepted = true;
    } else {
      lambda *= cfg.lambda_increase;
      rec.accepted = false;
    }
    rec.cost = cost;
    rec.cumulative_time_s = elapsed();
    res.trace.records.push_back(rec);
    if (converged) {
      res.trace.termination = "function_tolerance";
      break;
    }
    if (lambda > cfg.max_lambda) {
      res.trace.termination = "lambda_overflow";
      break;
    }
  }
  res.final_state = std::move(state);
  return res;
}

/// Dispatches on cfg.precision.
inline LmResult run(const BalProblem& problem, const LmConfig& cfg,
                    std::uint64_t seed = 0) {
  cfg.validate();
  return cfg.precision == 32 ? run_lm<float>(problem, cfg, seed)
                             : run_lm<double>(problem, cfg, seed);
}

}  // namespace poba
