#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "poba/common.hpp"
#include "poba/landmark_blocks.hpp"
#include "poba/power_series.hpp"

namespace poba {

struct CgReport {
  VecX solution;
  int iterations = 0;
  /// sqrt(r^T M r / r0^T M r0) at exit.
  double final_relative_residual = 0.0;
  double wall_time_s = 0.0;
  /// Preconditioned residual ratio before each iteration, then at exit.
  std::vector<double> residual_history;
};

/// Preconditioned conjugate gradients for SPD A. Stops when the
/// preconditioned residual ratio drops below tol or after max_iter steps.
template <typename ApplyA, typename ApplyM>
CgReport pcg(ApplyA&& apply_a, ApplyM&& apply_m, const VecX& rhs, double tol,
             int max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("pcg: tol must be > 0");
  if (max_iter < 0) throw std::invalid_argument("pcg: max_iter must be >= 0");
  const auto t0 = std::chrono::steady_clock::now();
  CgReport rep;
  rep.solution = VecX::Zero(rhs.size());
  if (rhs.squaredNorm() == 0.0) return rep;

  VecX r = rhs;
  VecX z = apply_m(r);
  VecX p = z;
  double rz = r.dot(z);
  const double rz0 = rz;
  POBA_CHECK(rz0 > 0.0, "preconditioner is not positive definite");
  rep.final_relative_residual = 1.0;
  while (true) {
    rep.final_relative_residual = std::sqrt(std::max(rz, 0.0) / rz0);
    rep.residual_history.push_back(rep.final_relative_residual);
    if (rep.final_relative_residual < tol || rep.iterations >= max_iter) break;
    const VecX q = apply_a(p);
    const double pq = p.dot(q);
    POBA_CHECK(pq > 0.0, "CG breakdown: <p, A p> = " << pq);
    const double alpha = rz / pq;
    rep.solution.noalias() += alpha * p;
    r.noalias() -= alpha * q;
    z = apply_m(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
    ++rep.iterations;
  }
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Block-diagonal of S: per camera U_c - sum_l W_cl V_l^-1 W_cl^T, inverted.
template <typename Scalar>
std::vector<Eigen::Matrix<double, kPoseDim, kPoseDim>> schur_jacobi_inverse(
    const DampedSystem<Scalar>& sys) {
  using M9 = Eigen::Matrix<double, kPoseDim, kPoseDim>;
  std::vector<M9> diag(sys.num_cameras());
  for (std::size_t c = 0; c < sys.num_cameras(); ++c)
    diag[c] = sys.u_blocks()[c].template cast<double>();
  for (std::size_t l = 0; l < sys.num_landmarks(); ++l) {
    const auto& b = sys.blocks()[l];
    const Mat3 v_inv = sys.v_inv_blocks()[l].template cast<double>();
    for (std::size_t j = 0; j < b.num_observations(); ++j) {
      const Eigen::Matrix<double, kPoseDim, 3> w =
          b.pose_jacobian(j).template cast<double>().transpose() *
          b.point_jacobian(j).template cast<double>();
      diag[b.cameras[j]].noalias() -= w * v_inv * w.transpose();
    }
  }
  for (std::size_t c = 0; c < diag.size(); ++c) {
    Eigen::LLT<M9> llt(diag[c]);
    POBA_CHECK(llt.info() == Eigen::Success,
               "Schur-Jacobi block " << c << " is not positive definite");
    diag[c] = llt.solve(M9::Identity());
  }
  return diag;
}

/// CG on S dx = -b̃ preconditioned by the Schur-Jacobi block diagonal.
template <typename Scalar>
CgReport pcg_schur_jacobi(const DampedSystem<Scalar>& sys, double tol,
                          int max_iter) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto m_inv = schur_jacobi_inverse(sys);
  const VecX rhs = -sys.compute_b_tilde();
  auto rep = pcg([&](const VecX& v) { return sys.apply_schur(v); },
                 [&](const VecX& v) {
                   VecX out(v.size());
                   for (std::size_t c = 0; c < m_inv.size(); ++c) {
                     const auto i = static_cast<Eigen::Index>(kPoseDim * c);
                     out.segment<kPoseDim>(i) = m_inv[c] * v.segment<kPoseDim>(i);
                   }
                   return out;
                 },
                 rhs, tol, max_iter);
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// CG on S dx = -b̃ preconditioned by the truncated series of order_m.
template <ReducedSystem System>
CgReport pcg_power_series_preconditioner(const System& sys, int order_m,
                                         double tol, int max_iter) {
  if (order_m < 0) throw std::invalid_argument("order_m must be >= 0");
  const auto t0 = std::chrono::steady_clock::now();
  const VecX rhs = -sys.compute_b_tilde();
  auto rep = pcg([&](const VecX& v) { return sys.apply_schur(v); },
                 [&](const VecX& v) { return apply_truncated_inverse(sys, v, order_m); },
                 rhs, tol, max_iter);
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline constexpr Eigen::Index kDenseDirectMaxDim = 2000;

/// S formed column by column from the matrix-free product.
template <typename System>
MatX dense_schur(const System& sys) {
  const Eigen::Index n = sys.pose_dim();
  if (n > kDenseDirectMaxDim)
    throw std::length_error("dense Schur complement exceeds size guard");
  MatX s(n, n);
  VecX e = VecX::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    e[i] = 1.0;
    s.col(i) = sys.apply_schur(e);
    e[i] = 0.0;
  }
  return 0.5 * (s + s.transpose());
}

/// Direct dense Cholesky solve of S dx = -b̃. Test oracle for small systems.
template <typename System>
VecX dense_direct(const System& sys) {
  const MatX s = dense_schur(sys);
  Eigen::LLT<MatX> llt(s);
  POBA_CHECK(llt.info() == Eigen::Success, "dense Schur complement is not SPD");
  return llt.solve(VecX(-sys.compute_b_tilde()));
}

}  // namespace poba
