#pragma once

#include <algorithm>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace poba {

/// Camera parameter count: axis-angle (3), translation (3), focal, k1, k2.
inline constexpr int kPoseDim = 9;
inline constexpr int kPointDim = 3;
inline constexpr int kResidualDim = 2;
/// Columns of a landmark block: pose Jacobian, landmark Jacobian, residual.
inline constexpr int kBlockCols = kPoseDim + kPointDim + 1;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

template <typename Scalar>
using PoseMat = Eigen::Matrix<Scalar, kPoseDim, kPoseDim>;
template <typename Scalar>
using PointMat = Eigen::Matrix<Scalar, kPointDim, kPointDim>;
using PoseVec = Eigen::Matrix<double, kPoseDim, 1>;

/// Raised when an internal invariant is violated (assembly bugs, SPD loss).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

#define POBA_CHECK(cond, msg)                                              \
  do {                                                                     \
    if (!(cond)) {                                                         \
      std::ostringstream poba_check_os_;                                   \
      poba_check_os_ << msg << " [" #cond "] at " << __FILE__ << ":"       \
                     << __LINE__;                                          \
      throw ::poba::InvariantError(poba_check_os_.str());                  \
    }                                                                      \
  } while (false)

inline void check_size(Eigen::Index actual, Eigen::Index expected,
                       const char* what) {
  if (actual != expected) {
    std::ostringstream os;
    os << what << ": dimension mismatch (got " << actual << ", expected "
       << expected << ")";
    throw std::invalid_argument(os.str());
  }
}

/// Runs body(begin, end) over [0, n) split into contiguous chunks on up to
/// num_threads threads. Chunks never share output, so results do not depend
/// on the thread count.
template <typename Body>
void parallel_for(std::size_t n, int num_threads, Body&& body,
                  std::size_t min_parallel = 256) {
  const std::size_t threads = static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(num_threads, 1, static_cast<std::ptrdiff_t>(std::max<std::size_t>(n, 1))));
  if (threads <= 1 || n < min_parallel) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 1; t < threads; ++t) {
    const std::size_t b = t * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&body, b, e] { body(b, e); });
  }
  body(std::size_t{0}, std::min(n, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace poba
