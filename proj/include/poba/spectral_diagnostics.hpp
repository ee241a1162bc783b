#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "poba/baseline_solvers.hpp"
#include "poba/landmark_blocks.hpp"
#include "poba/power_series.hpp"

namespace poba {

struct SpectralEstimate {
  double rho = 0.0;
  int iterations = 0;
  bool converged = false;
  double tolerance = 0.0;
};

/// U^-1/2 per camera block, from the symmetric eigendecomposition.
template <typename Scalar>
std::vector<Eigen::Matrix<double, kPoseDim, kPoseDim>> inverse_sqrt_u_blocks(
    const DampedSystem<Scalar>& sys) {
  using M9 = Eigen::Matrix<double, kPoseDim, kPoseDim>;
  std::vector<M9> out(sys.num_cameras());
  for (std::size_t c = 0; c < sys.num_cameras(); ++c) {
    Eigen::SelfAdjointEigenSolver<M9> es(sys.u_blocks()[c].template cast<double>());
    POBA_CHECK(es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0,
               "pose block " << c << " is not positive definite");
    out[c] = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
             es.eigenvectors().transpose();
  }
  return out;
}

/// Dominant eigenvalue of P = U^-1 W V^-1 W^T by power iteration on the
/// similar symmetric operator U^-1/2 W V^-1 W^T U^-1/2. Stops once the
/// Rayleigh quotient changes by less than tol relative between iterations.
template <typename Scalar>
SpectralEstimate estimate_spectral_radius(const DampedSystem<Scalar>& sys,
                                          double tol, int max_iter,
                                          std::uint64_t seed = 7) {
  if (!(tol > 0.0) || max_iter < 1)
    throw std::invalid_argument("estimate_spectral_radius: bad tolerance or limit");
  const auto half = inverse_sqrt_u_blocks(sys);
  auto apply_half = [&](const VecX& v) {
    VecX out(v.size());
    for (std::size_t c = 0; c < half.size(); ++c) {
      const auto i = static_cast<Eigen::Index>(kPoseDim * c);
      out.segment<kPoseDim>(i) = half[c] * v.segment<kPoseDim>(i);
    }
    return out;
  };
  auto apply_q = [&](const VecX& v) {
    return apply_half(sys.apply_W(sys.apply_V_inv(sys.apply_Wt(apply_half(v)))));
  };

  SpectralEstimate est;
  est.tolerance = tol;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  VecX v(sys.pose_dim());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = nd(rng);
  v.normalize();
  for (est.iterations = 1; est.iterations <= max_iter; ++est.iterations) {
    const VecX q = apply_q(v);
    const double qn = q.norm();
    if (qn == 0.0) {
      est.rho = 0.0;
      est.converged = true;
      return est;
    }
    const double prev = est.rho;
    est.rho = v.dot(q);
    if (est.iterations > 1 && std::abs(est.rho - prev) <= tol * std::abs(est.rho)) {
      est.converged = true;
      return est;
    }
    v = q / qn;
  }
  est.iterations = max_iter;
  return est;
}

// ---------------------------------------------------------------------------
// Dense routes (test oracles and bound verification on small systems).

/// Dense matrix of a pose-space linear map given as a functor.
template <typename Apply>
MatX dense_operator(Eigen::Index n, Apply&& apply) {
  if (n > kDenseDirectMaxDim) throw std::length_error("dense operator exceeds size guard");
  MatX m(n, n);
  VecX e = VecX::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    e[i] = 1.0;
    m.col(i) = apply(e);
    e[i] = 0.0;
  }
  return m;
}

/// P = U^-1 W V^-1 W^T, materialized.
template <ReducedSystem System>
MatX dense_iteration_matrix(const System& sys) {
  return dense_operator(sys.pose_dim(), [&](const VecX& v) {
    return VecX(sys.apply_U_inv(sys.apply_W(sys.apply_V_inv(sys.apply_Wt(v)))));
  });
}

struct DenseSpectrum {
  VecX eigenvalues;  // ascending, of U^-1/2 W V^-1 W^T U^-1/2
  double u_inv_norm = 0.0;
};

/// Eigenvalues of P through its symmetric similarity transform, formed from
/// dense U^-1 (not the blockwise square roots used by the estimator).
template <ReducedSystem System>
DenseSpectrum dense_spectrum(const System& sys) {
  const Eigen::Index n = sys.pose_dim();
  MatX u_inv = dense_operator(n, [&](const VecX& v) { return VecX(sys.apply_U_inv(v)); });
  u_inv = 0.5 * (u_inv + u_inv.transpose());
  Eigen::SelfAdjointEigenSolver<MatX> eu(u_inv);
  POBA_CHECK(eu.eigenvalues().minCoeff() > 0.0, "U^-1 is not positive definite");
  const MatX half = eu.eigenvectors() * eu.eigenvalues().cwiseSqrt().asDiagonal() *
                    eu.eigenvectors().transpose();
  MatX coupling = dense_operator(n, [&](const VecX& v) {
    return VecX(sys.apply_W(sys.apply_V_inv(sys.apply_Wt(v))));
  });
  coupling = 0.5 * (coupling + coupling.transpose());
  MatX q = half * coupling * half;
  q = 0.5 * (q + q.transpose());
  Eigen::SelfAdjointEigenSolver<MatX> eq(q, Eigen::EigenvaluesOnly);
  DenseSpectrum out;
  out.eigenvalues = eq.eigenvalues();
  out.u_inv_norm = eu.eigenvalues().maxCoeff();
  return out;
}

struct SpectralReport {
  double rho_P = 0.0;
  double u_inv_norm = 0.0;
  double b_tilde_norm = 0.0;
  /// m -> rho^(m+1) / (1 - rho)
  std::vector<double> bound_curve;
  /// m -> bound_curve[m] * ||U^-1|| * ||b̃||, comparable to the measured error
  std::vector<double> error_bound;
  /// m -> ||x(m) - dx_p*||
  std::vector<double> measured_error_curve;
  /// first m with measured > error_bound * (1 + slack), or -1
  int first_violation = -1;
  double slack = 1e-8;
  int estimator_iterations = 0;
  double estimator_tolerance = 0.0;

  void require_bound() const {
    if (first_violation >= 0) {
      std::ostringstream os;
      os << "series error exceeds bound at m = " << first_violation << " (measured "
         << measured_error_curve[static_cast<std::size_t>(first_violation)] << ", bound "
         << error_bound[static_cast<std::size_t>(first_violation)] << ")";
      throw InvariantError(os.str());
    }
  }
};

/// Compares the truncated-series error against rho^(m+1)/(1-rho) ||U^-1|| ||b̃||
/// for m = 0..max_order, with rho from the dense spectrum.
template <ReducedSystem System>
SpectralReport verify_error_bound(const System& sys, int max_order,
                                  double slack = 1e-8) {
  if (max_order < 0) throw std::invalid_argument("max_order must be >= 0");
  SpectralReport rep;
  rep.slack = slack;
  const DenseSpectrum spec = dense_spectrum(sys);
  rep.rho_P = std::max(0.0, spec.eigenvalues.cwiseAbs().maxCoeff());
  rep.u_inv_norm = spec.u_inv_norm;
  const VecX b_tilde = sys.compute_b_tilde();
  rep.b_tilde_norm = b_tilde.norm();
  const VecX exact = dense_direct(sys);

  auto state = PowerSeriesState::start(sys, VecX(-b_tilde));
  for (int m = 0; m <= max_order; ++m) {
    if (m > 0) state.advance(sys);
    const double pure = std::pow(rep.rho_P, m + 1) / (1.0 - rep.rho_P);
    rep.bound_curve.push_back(pure);
    rep.error_bound.push_back(pure * rep.u_inv_norm * rep.b_tilde_norm);
    rep.measured_error_curve.push_back((state.x - exact).norm());
    if (rep.first_violation < 0 &&
        rep.measured_error_curve.back() > rep.error_bound.back() * (1.0 + slack))
      rep.first_violation = m;
  }
  return rep;
}

}  // namespace poba
