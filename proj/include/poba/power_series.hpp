#pragma once

#include <cmath>
#include <concepts>
#include <stdexcept>

#include "poba/common.hpp"

namespace poba {

/// The operations a reduced camera system must offer for the inverse
/// expansion: block inverses of the diagonal parts and the coupling products.
template <typename S>
concept ReducedSystem = requires(const S& s, const VecX& v) {
  { s.pose_dim() } -> std::convertible_to<Eigen::Index>;
  { s.landmark_dim() } -> std::convertible_to<Eigen::Index>;
  { s.apply_U_inv(v) } -> std::convertible_to<VecX>;
  { s.apply_V_inv(v) } -> std::convertible_to<VecX>;
  { s.apply_W(v) } -> std::convertible_to<VecX>;
  { s.apply_Wt(v) } -> std::convertible_to<VecX>;
  { s.compute_b_tilde() } -> std::convertible_to<VecX>;
};

/// True when (i + 1) * ||x_i - x_prev|| / ||x_i|| < epsilon.
inline bool stop_criterion(const VecX& x_i, const VecX& x_prev, int i,
                           double epsilon) {
  if (i < 1) throw std::invalid_argument("stop_criterion: needs i >= 1");
  check_size(x_prev.size(), x_i.size(), "stop_criterion");
  const double norm = x_i.norm();
  if (!(norm > 0.0))
    throw std::invalid_argument("stop_criterion: zero iterate norm");
  return static_cast<double>(i + 1) * (x_i - x_prev).norm() / norm < epsilon;
}

/// Running state of the truncated series x(i) = sum_{j<=i} P^j U^-1 rhs with
/// P = U^-1 W V^-1 W^T. Only the last summand and the running sum are kept.
struct PowerSeriesState {
  int order = 0;
  VecX x;
  VecX term;

  template <ReducedSystem System>
  static PowerSeriesState start(const System& sys, const VecX& rhs) {
    check_size(rhs.size(), sys.pose_dim(), "power series rhs");
    PowerSeriesState s;
    s.term = sys.apply_U_inv(rhs);
    s.x = s.term;
    return s;
  }

  /// One more order: four operator passes (W^T, V^-1, W, U^-1).
  template <ReducedSystem System>
  void advance(const System& sys) {
    term = sys.apply_U_inv(sys.apply_W(sys.apply_V_inv(sys.apply_Wt(term))));
    x += term;
    ++order;
  }
};

/// x(order) applied to an arbitrary right-hand side, no early stop. This is
/// the preconditioner form of the truncated inverse.
template <ReducedSystem System>
VecX apply_truncated_inverse(const System& sys, const VecX& rhs, int order) {
  if (order < 0) throw std::invalid_argument("negative series order");
  auto s = PowerSeriesState::start(sys, rhs);
  while (s.order < order) s.advance(sys);
  return s.x;
}

struct PowerSeriesResult {
  VecX delta_p;
  int order_used = 0;
  bool max_order_hit = false;
};

/// Approximates the solution of S dx = -b̃ by expanding S^-1 as a power
/// series, stopping on the relative-refinement criterion or at max_order.
template <ReducedSystem System>
PowerSeriesResult power_series_solve(const System& sys, const VecX& b_tilde,
                                     double epsilon, int max_order) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (max_order < 1) throw std::invalid_argument("max_order must be >= 1");
  check_size(b_tilde.size(), sys.pose_dim(), "power_series_solve");

  PowerSeriesResult res;
  if (b_tilde.squaredNorm() == 0.0) {
    res.delta_p = VecX::Zero(b_tilde.size());
    return res;
  }
  auto state = PowerSeriesState::start(sys, VecX(-b_tilde));
  VecX prev;
  for (;;) {
    if (!state.x.allFinite())
      throw InvariantError("power series produced a non-finite iterate at order " +
                           std::to_string(state.order));
    if (state.order >= 1 && stop_criterion(state.x, prev, state.order, epsilon))
      break;
    if (state.order >= max_order) {
      res.max_order_hit = true;
      break;
    }
    prev = state.x;
    state.advance(sys);
  }
  res.order_used = state.order;
  res.delta_p = std::move(state.x);
  return res;
}

template <ReducedSystem System>
PowerSeriesResult power_series_solve(const System& sys, double epsilon,
                                     int max_order) {
  return power_series_solve(sys, VecX(sys.compute_b_tilde()), epsilon, max_order);
}

/// Landmark update from the pose update: dx_l = -V^-1 (b_l + W^T dx_p).
template <typename System>
VecX back_substitute(const System& sys, const VecX& delta_p) {
  check_size(delta_p.size(), sys.pose_dim(), "back_substitute");
  return -sys.apply_V_inv(VecX(sys.b_l() + sys.apply_Wt(delta_p)));
}

}  // namespace poba
