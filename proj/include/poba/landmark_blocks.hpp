#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "poba/bal_io.hpp"
#include "poba/camera_model.hpp"
#include "poba/common.hpp"

namespace poba {

/// Stacked Jacobians and residuals of one landmark: a 2k x 13 dense block
/// laid out as [pose Jacobians (2x9 per observation) | landmark Jacobian |
/// residual]. Observations are ordered by increasing camera index.
template <typename Scalar>
struct LandmarkBlock {
  using Storage =
      Eigen::Matrix<Scalar, Eigen::Dynamic, kBlockCols, Eigen::RowMajor>;

  std::size_t landmark = 0;
  std::vector<std::size_t> cameras;
  Storage storage;

  std::size_t num_observations() const { return cameras.size(); }

  auto pose_jacobian(std::size_t j) const {
    return storage.template block<2, kPoseDim>(2 * static_cast<Eigen::Index>(j), 0);
  }
  auto pose_jacobian(std::size_t j) {
    return storage.template block<2, kPoseDim>(2 * static_cast<Eigen::Index>(j), 0);
  }
  auto point_jacobian(std::size_t j) const {
    return storage.template block<2, kPointDim>(2 * static_cast<Eigen::Index>(j), kPoseDim);
  }
  auto point_jacobian(std::size_t j) {
    return storage.template block<2, kPointDim>(2 * static_cast<Eigen::Index>(j), kPoseDim);
  }
  auto residual(std::size_t j) const {
    return storage.template block<2, 1>(2 * static_cast<Eigen::Index>(j), kBlockCols - 1);
  }
  auto residual(std::size_t j) {
    return storage.template block<2, 1>(2 * static_cast<Eigen::Index>(j), kBlockCols - 1);
  }
};

enum class DampingMode {
  kJacobiScaled,  // D = sqrt(diag(J^T J)), clamped
  kIdentity,
};

inline constexpr double kMinDampingDiag = 1e-6;
inline constexpr double kMaxDampingDiag = 1e6;

/// Bytes held by the per-landmark blocks and the block-diagonal caches.
struct StorageAccount {
  std::size_t block_bytes = 0;
  std::size_t diagonal_bytes = 0;
  std::size_t vector_bytes = 0;
  std::size_t index_bytes = 0;
  std::size_t total() const {
    return block_bytes + diagonal_bytes + vector_bytes + index_bytes;
  }
};

/// Landmark blocks with observations grouped per point, plus the count of
/// zero-depth observations that were zeroed out.
template <typename Scalar>
struct Linearization {
  std::vector<LandmarkBlock<Scalar>> blocks;
  std::size_t invalid_observations = 0;
};

/// Evaluates residuals and Jacobians for every observation and groups them
/// into landmark blocks.
template <typename Scalar>
Linearization<Scalar> linearize(const BalProblem& problem,
                                int num_threads = 1) {
  const std::size_t n_l = problem.num_points();
  std::vector<std::vector<std::size_t>> obs_of_point(n_l);
  for (std::size_t i = 0; i < problem.num_observations(); ++i)
    obs_of_point[problem.observations[i].point].push_back(i);

  Linearization<Scalar> lin;
  lin.blocks.resize(n_l);
  std::vector<std::size_t> invalid(n_l, 0);
  parallel_for(n_l, num_threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t l = begin; l < end; ++l) {
      auto& ids = obs_of_point[l];
      std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
        return problem.observations[a].camera < problem.observations[b].camera;
      });
      auto& blk = lin.blocks[l];
      blk.landmark = l;
      blk.cameras.resize(ids.size());
      blk.storage.resize(2 * static_cast<Eigen::Index>(ids.size()), kBlockCols);
      for (std::size_t j = 0; j < ids.size(); ++j) {
        const Observation& o = problem.observations[ids[j]];
        blk.cameras[j] = o.camera;
        const auto rj = residual_and_jacobians(problem.cameras[o.camera],
                                               problem.points[l], o.pixel);
        if (!rj.valid) ++invalid[l];
        blk.pose_jacobian(j) = rj.jac.pose.template cast<Scalar>();
        blk.point_jacobian(j) = rj.jac.point.template cast<Scalar>();
        blk.residual(j) = rj.residual.template cast<Scalar>();
      }
    }
  });
  lin.invalid_observations =
      std::accumulate(invalid.begin(), invalid.end(), std::size_t{0});
  return lin;
}

/// Block representation of the damped normal equations of one LM iteration.
/// W is never formed; products with W and W^T stream over the landmark
/// blocks. Vectors are held and accumulated in double regardless of Scalar.
template <typename Scalar>
class DampedSystem {
 public:
  using Block = LandmarkBlock<Scalar>;
  using PoseBlock = PoseMat<Scalar>;
  using PointBlock = PointMat<Scalar>;

  /// Fixed landmark chunking for pose-space scatters; independent of the
  /// thread count so reductions are bitwise reproducible.
  static constexpr std::size_t kScatterChunks = 16;

  DampedSystem() = default;

  /// Builds from landmark blocks. When damping diagonals are not supplied
  /// they are derived from the undamped J^T J according to mode.
  DampedSystem(std::size_t num_cameras, std::vector<Block> blocks,
               double lambda, DampingMode mode = DampingMode::kJacobiScaled,
               const VecX* pose_damping = nullptr,
               const VecX* point_damping = nullptr, int num_threads = 1)
      : n_p_(num_cameras), blocks_(std::move(blocks)), threads_(num_threads) {
    n_l_ = blocks_.size();
    for (std::size_t l = 0; l < n_l_; ++l) {
      const auto& b = blocks_[l];
      POBA_CHECK(std::is_sorted(b.cameras.begin(), b.cameras.end()) &&
                     std::adjacent_find(b.cameras.begin(), b.cameras.end()) ==
                         b.cameras.end(),
                 "landmark block cameras must be strictly increasing");
      for (auto c : b.cameras) POBA_CHECK(c < n_p_, "camera index out of range");
    }
    accumulate_undamped();
    if (pose_damping) {
      check_size(pose_damping->size(), pose_dim(), "pose damping");
      d_p_ = *pose_damping;
    } else {
      d_p_ = damping_diagonal(undamped_diagonal_poses(), mode);
    }
    if (point_damping) {
      check_size(point_damping->size(), landmark_dim(), "point damping");
      d_l_ = *point_damping;
    } else {
      d_l_ = damping_diagonal(undamped_diagonal_points(), mode);
    }
    set_damping(lambda);
  }

  /// Recomputes the damped diagonal blocks and their inverses for a new
  /// lambda without relinearizing.
  void set_damping(double lambda) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    lambda_ = lambda;
    u_.resize(n_p_);
    u_inv_.resize(n_p_);
    v_.resize(n_l_);
    v_inv_.resize(n_l_);
    for (std::size_t c = 0; c < n_p_; ++c) {
      Eigen::Matrix<double, kPoseDim, kPoseDim> u = u0_[c].template cast<double>();
      for (int k = 0; k < kPoseDim; ++k) {
        const double d = d_p_[static_cast<Eigen::Index>(c * kPoseDim + k)];
        u(k, k) += lambda * d * d;
      }
      Eigen::LLT<Eigen::Matrix<double, kPoseDim, kPoseDim>> llt(u);
      POBA_CHECK(llt.info() == Eigen::Success,
                 "pose block " << c << " is not positive definite");
      u_[c] = u.template cast<Scalar>();
      u_inv_[c] = llt.solve(Eigen::Matrix<double, kPoseDim, kPoseDim>::Identity())
                      .template cast<Scalar>();
    }
    for (std::size_t l = 0; l < n_l_; ++l) {
      Mat3 v = v0_[l].template cast<double>();
      for (int k = 0; k < kPointDim; ++k) {
        const double d = d_l_[static_cast<Eigen::Index>(l * kPointDim + k)];
        v(k, k) += lambda * d * d;
      }
      Eigen::LLT<Mat3> llt(v);
      POBA_CHECK(llt.info() == Eigen::Success,
                 "landmark block " << l << " is not positive definite");
      v_[l] = v.template cast<Scalar>();
      v_inv_[l] = llt.solve(Mat3::Identity()).template cast<Scalar>();
    }
  }

  std::size_t num_cameras() const { return n_p_; }
  std::size_t num_landmarks() const { return n_l_; }
  Eigen::Index pose_dim() const { return static_cast<Eigen::Index>(kPoseDim * n_p_); }
  Eigen::Index landmark_dim() const { return static_cast<Eigen::Index>(kPointDim * n_l_); }
  double lambda() const { return lambda_; }
  int num_threads() const { return threads_; }
  void set_num_threads(int t) { threads_ = std::max(1, t); }

  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<PoseBlock>& u_blocks() const { return u_; }
  const std::vector<PoseBlock>& u_inv_blocks() const { return u_inv_; }
  const std::vector<PointBlock>& v_blocks() const { return v_; }
  const std::vector<PointBlock>& v_inv_blocks() const { return v_inv_; }
  const VecX& b_p() const { return b_p_; }
  const VecX& b_l() const { return b_l_; }
  const VecX& pose_damping() const { return d_p_; }
  const VecX& point_damping() const { return d_l_; }

  /// Number of block-operator passes (W, W^T, U^-1, V^-1, U) applied so far.
  std::size_t operator_passes() const { return passes_; }
  void reset_operator_passes() const { passes_ = 0; }

  /// W v_l: landmark space -> pose space.
  VecX apply_W(const VecX& v_l) const {
    check_size(v_l.size(), landmark_dim(), "apply_W");
    ++passes_;
    return scatter_poses([&](const Block& b, std::size_t l, auto&& add) {
      const Vec3 seg = v_l.segment<3>(static_cast<Eigen::Index>(3 * l));
      for (std::size_t j = 0; j < b.num_observations(); ++j) {
        const Vec2 jl = b.point_jacobian(j).template cast<double>() * seg;
        add(b.cameras[j], b.pose_jacobian(j).template cast<double>().transpose() * jl);
      }
    });
  }

  /// W^T v_p: pose space -> landmark space.
  VecX apply_Wt(const VecX& v_p) const {
    check_size(v_p.size(), pose_dim(), "apply_Wt");
    ++passes_;
    VecX out(landmark_dim());
    parallel_for(n_l_, threads_, [&](std::size_t begin, std::size_t end) {
      for (std::size_t l = begin; l < end; ++l) {
        const Block& b = blocks_[l];
        Vec3 acc = Vec3::Zero();
        for (std::size_t j = 0; j < b.num_observations(); ++j) {
          const Vec2 jp = b.pose_jacobian(j).template cast<double>() *
                          v_p.segment<kPoseDim>(static_cast<Eigen::Index>(kPoseDim * b.cameras[j]));
          acc.noalias() += b.point_jacobian(j).template cast<double>().transpose() * jp;
        }
        out.segment<3>(static_cast<Eigen::Index>(3 * l)) = acc;
      }
    });
    return out;
  }

  VecX apply_V_inv(const VecX& v_l) const {
    check_size(v_l.size(), landmark_dim(), "apply_V_inv");
    ++passes_;
    VecX out(landmark_dim());
    parallel_for(n_l_, threads_, [&](std::size_t begin, std::size_t end) {
      for (std::size_t l = begin; l < end; ++l) {
        const auto i = static_cast<Eigen::Index>(3 * l);
        out.segment<3>(i) = v_inv_[l].template cast<double>() * v_l.segment<3>(i);
      }
    });
    return out;
  }

  VecX apply_U_inv(const VecX& v_p) const {
    check_size(v_p.size(), pose_dim(), "apply_U_inv");
    ++passes_;
    return apply_pose_blocks(u_inv_, v_p);
  }

  VecX apply_U(const VecX& v_p) const {
    check_size(v_p.size(), pose_dim(), "apply_U");
    ++passes_;
    return apply_pose_blocks(u_, v_p);
  }

  /// b̃ = b_p - W V^-1 b_l.
  VecX compute_b_tilde() const { return b_p_ - apply_W(apply_V_inv(b_l_)); }

  /// S v = U v - W V^-1 W^T v.
  VecX apply_schur(const VecX& v_p) const {
    check_size(v_p.size(), pose_dim(), "apply_schur");
    return apply_U(v_p) - apply_W(apply_V_inv(apply_Wt(v_p)));
  }

  /// Analytic byte count of everything this system keeps resident.
  StorageAccount storage_account() const {
    StorageAccount acc;
    for (const auto& b : blocks_) {
      acc.block_bytes += 2 * b.num_observations() * kBlockCols * sizeof(Scalar);
      acc.index_bytes += b.num_observations() * sizeof(std::size_t);
    }
    // undamped, damped and inverted diagonal blocks
    acc.diagonal_bytes = 3 * sizeof(Scalar) *
                         (n_p_ * kPoseDim * kPoseDim + n_l_ * kPointDim * kPointDim);
    // b_p, b_l, D_p, D_l
    acc.vector_bytes =
        2 * sizeof(double) * static_cast<std::size_t>(pose_dim() + landmark_dim());
    return acc;
  }

  /// Sum of all squared residuals stored in the blocks, times 1/2.
  double linearization_cost() const {
    double c = 0.0;
    for (const auto& b : blocks_)
      c += 0.5 * b.storage.col(kBlockCols - 1).template cast<double>().squaredNorm();
    return c;
  }

 private:
  template <typename Fn>
  VecX scatter_poses(Fn&& per_block) const {
    const std::size_t chunks = std::min<std::size_t>(kScatterChunks, std::max<std::size_t>(n_l_, 1));
    std::vector<VecX> partial(chunks, VecX::Zero(pose_dim()));
    const std::size_t span = (n_l_ + chunks - 1) / std::max<std::size_t>(chunks, 1);
    parallel_for(chunks, std::min<int>(threads_, static_cast<int>(chunks)),
                 [&](std::size_t cb, std::size_t ce) {
                   for (std::size_t ch = cb; ch < ce; ++ch) {
                     VecX& acc = partial[ch];
                     auto add = [&acc](std::size_t cam, const PoseVec& v) {
                       acc.segment<kPoseDim>(static_cast<Eigen::Index>(kPoseDim * cam)) += v;
                     };
                     const std::size_t lb = ch * span;
                     const std::size_t le = std::min(n_l_, lb + span);
                     for (std::size_t l = lb; l < le; ++l) per_block(blocks_[l], l, add);
                   }
                 },
                 /*min_parallel=*/1);
    VecX out = VecX::Zero(pose_dim());
    for (const auto& p : partial) out += p;
    return out;
  }

  VecX apply_pose_blocks(const std::vector<PoseBlock>& mats, const VecX& v_p) const {
    VecX out(pose_dim());
    for (std::size_t c = 0; c < n_p_; ++c) {
      const auto i = static_cast<Eigen::Index>(kPoseDim * c);
      out.segment<kPoseDim>(i) = mats[c].template cast<double>() * v_p.segment<kPoseDim>(i);
    }
    return out;
  }

  void accumulate_undamped() {
    u0_.assign(n_p_, PoseBlock::Zero());
    v0_.assign(n_l_, PointBlock::Zero());
    b_l_ = VecX::Zero(landmark_dim());
    std::vector<Eigen::Matrix<double, kPoseDim, kPoseDim>> u_acc(
        n_p_, Eigen::Matrix<double, kPoseDim, kPoseDim>::Zero());
    b_p_ = VecX::Zero(pose_dim());
    for (std::size_t l = 0; l < n_l_; ++l) {
      const Block& b = blocks_[l];
      Mat3 v = Mat3::Zero();
      Vec3 bl = Vec3::Zero();
      for (std::size_t j = 0; j < b.num_observations(); ++j) {
        const auto jp = b.pose_jacobian(j).template cast<double>().eval();
        const auto jl = b.point_jacobian(j).template cast<double>().eval();
        const Vec2 r = b.residual(j).template cast<double>();
        const std::size_t c = b.cameras[j];
        u_acc[c].noalias() += jp.transpose() * jp;
        b_p_.segment<kPoseDim>(static_cast<Eigen::Index>(kPoseDim * c)) += jp.transpose() * r;
        v.noalias() += jl.transpose() * jl;
        bl.noalias() += jl.transpose() * r;
      }
      v0_[l] = v.template cast<Scalar>();
      b_l_.segment<3>(static_cast<Eigen::Index>(3 * l)) = bl;
    }
    for (std::size_t c = 0; c < n_p_; ++c) u0_[c] = u_acc[c].template cast<Scalar>();
  }

  VecX undamped_diagonal_poses() const {
    VecX d(pose_dim());
    for (std::size_t c = 0; c < n_p_; ++c)
      for (int k = 0; k < kPoseDim; ++k)
        d[static_cast<Eigen::Index>(kPoseDim * c + k)] = static_cast<double>(u0_[c](k, k));
    return d;
  }
  VecX undamped_diagonal_points() const {
    VecX d(landmark_dim());
    for (std::size_t l = 0; l < n_l_; ++l)
      for (int k = 0; k < kPointDim; ++k)
        d[static_cast<Eigen::Index>(kPointDim * l + k)] = static_cast<double>(v0_[l](k, k));
    return d;
  }

  static VecX damping_diagonal(const VecX& jtj_diag, DampingMode mode) {
    if (mode == DampingMode::kIdentity) return VecX::Ones(jtj_diag.size());
    return jtj_diag.unaryExpr([](double x) {
      return std::clamp(std::sqrt(std::max(x, 0.0)), kMinDampingDiag, kMaxDampingDiag);
    });
  }

  std::size_t n_p_ = 0;
  std::size_t n_l_ = 0;
  std::vector<Block> blocks_;
  std::vector<PoseBlock> u0_, u_, u_inv_;
  std::vector<PointBlock> v0_, v_, v_inv_;
  VecX b_p_, b_l_, d_p_, d_l_;
  double lambda_ = 0.0;
  int threads_ = 1;
  mutable std::size_t passes_ = 0;
};

struct AssembleOptions {
  DampingMode damping = DampingMode::kJacobiScaled;
  int num_threads = 1;
};

/// Linearizes problem at its current state and builds the damped system.
template <typename Scalar>
DampedSystem<Scalar> assemble(const BalProblem& problem, double lambda,
                              const AssembleOptions& opts = {},
                              std::size_t* invalid_observations = nullptr) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("assemble: lambda must be >= 0");
  auto lin = linearize<Scalar>(problem, opts.num_threads);
  if (invalid_observations) *invalid_observations = lin.invalid_observations;
  return DampedSystem<Scalar>(problem.num_cameras(), std::move(lin.blocks),
                              lambda, opts.damping, nullptr, nullptr,
                              opts.num_threads);
}

}  // namespace poba
