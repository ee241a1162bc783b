#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "poba/bal_io.hpp"
#include "poba/camera_model.hpp"

namespace poba {

struct SyntheticOptions {
  std::size_t num_cameras = 5;
  std::size_t num_points = 20;
  std::size_t min_views = 2;
  double pixel_noise = 0.5;
  /// Noise on the initial estimate (points, translations).
  double initial_noise = 0.02;
  double rotation_noise = 2e-3;
  std::uint64_t seed = 1;
};

namespace detail {

/// World-to-camera rotation for a camera at center looking at target; the
/// camera looks down its negative z axis.
inline Mat3 look_at(const Vec3& center, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - center).normalized();
  const Vec3 z = -forward;
  const Vec3 x = up.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  return r;
}

inline void finish_synthetic(BalProblem& p, const SyntheticOptions& opt,
                             std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  for (auto& o : p.observations) {
    const auto proj = project(p.cameras[o.camera], p.points[o.point]);
    if (!proj) throw std::logic_error("synthetic observation with zero depth");
    o.pixel = *proj + opt.pixel_noise * Vec2(nd(rng), nd(rng));
  }
  for (auto& pt : p.points)
    for (int k = 0; k < 3; ++k) pt[k] += opt.initial_noise * nd(rng);
  for (auto& c : p.cameras) {
    PoseVec d = PoseVec::Zero();
    for (int k = 0; k < 3; ++k) d[k] = opt.rotation_noise * nd(rng);
    for (int k = 3; k < 6; ++k) d[k] = opt.initial_noise * nd(rng);
    c = box_plus(c, d);
  }
}

}  // namespace detail

/// Cameras on a ring looking at a cloud of points around the origin. Every
/// point is seen by between min_views and all cameras; every camera sees at
/// least one point.
inline BalProblem make_synthetic_problem(const SyntheticOptions& opt) {
  if (opt.num_cameras < 1 || opt.num_points < 1)
    throw std::invalid_argument("synthetic problem needs cameras and points");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> nd;

  BalProblem p;
  for (std::size_t c = 0; c < opt.num_cameras; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                             static_cast<double>(opt.num_cameras) * 0.5 +
                         0.1 * unit(rng);
    const Vec3 center(10.0 * std::cos(angle), 1.0 * unit(rng), 10.0 * std::sin(angle));
    const Mat3 r = detail::look_at(center, Vec3(0.3 * unit(rng), 0.3 * unit(rng), 0.3 * unit(rng)),
                                   Vec3::UnitY());
    CameraParams cam;
    cam.rotation = rotation_log(r);
    cam.translation = -r * center;
    cam.focal = 500.0 + 20.0 * unit(rng);
    cam.k1 = 0.01 * unit(rng);
    cam.k2 = 0.001 * unit(rng);
    p.cameras.push_back(cam);
  }
  for (std::size_t l = 0; l < opt.num_points; ++l)
    p.points.emplace_back(2.0 * unit(rng), 2.0 * unit(rng), 2.0 * unit(rng));

  const std::size_t min_views = std::min(std::max<std::size_t>(opt.min_views, 1), opt.num_cameras);
  std::vector<std::size_t> order(opt.num_cameras);
  std::vector<char> cam_used(opt.num_cameras, 0);
  for (std::size_t l = 0; l < opt.num_points; ++l) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> kd(min_views, opt.num_cameras);
    const std::size_t k = kd(rng);
    std::vector<std::size_t> cams(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(cams.begin(), cams.end());
    for (auto c : cams) {
      p.observations.push_back(Observation{c, l, Vec2::Zero()});
      cam_used[c] = 1;
    }
  }
  std::uniform_int_distribution<std::size_t> pick(0, opt.num_points - 1);
  for (std::size_t c = 0; c < opt.num_cameras; ++c)
    if (!cam_used[c]) p.observations.push_back(Observation{c, pick(rng), Vec2::Zero()});
  detail::finish_synthetic(p, opt, rng);
  return p;
}

/// A forward-moving 49-camera street sequence with the dimensions of the
/// smallest Ladybug problem (49 poses, 7776 points, roughly 4 views per
/// point). Used where the real file is not available.
inline BalProblem make_ladybug_like(std::uint64_t seed = 49, std::size_t num_cameras = 49,
                                    std::size_t num_points = 7776) {
  SyntheticOptions opt;
  opt.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  BalProblem p;
  std::vector<Vec3> centers;
  std::vector<Mat3> rots;
  for (std::size_t c = 0; c < num_cameras; ++c) {
    const Vec3 center(static_cast<double>(c), 0.05 * unit(rng), 1.5 + 0.05 * unit(rng));
    const Vec3 target = center + Vec3(10.0, 0.3 * unit(rng), 0.2 * unit(rng));
    const Mat3 r = detail::look_at(center, target, Vec3::UnitZ());
    CameraParams cam;
    cam.rotation = rotation_log(r);
    cam.translation = -r * center;
    cam.focal = 400.0 + 5.0 * unit(rng);
    cam.k1 = -0.02 + 0.005 * unit(rng);
    cam.k2 = 0.001 * unit(rng);
    p.cameras.push_back(cam);
    centers.push_back(center);
    rots.push_back(r);
  }
  constexpr double kHalfWidth = 360.0, kHalfHeight = 270.0;
  constexpr double kMinDepth = 1.5, kMaxDepth = 8.0;
  const double x_max = static_cast<double>(num_cameras) + kMaxDepth;
  std::size_t attempts = 0;
  while (p.points.size() < num_points) {
    if (++attempts > 200 * num_points) throw std::runtime_error("ladybug generator stalled");
    const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
    const Vec3 x(x_max * u01(rng), side * (1.0 + 5.0 * u01(rng)), -0.5 + 5.0 * u01(rng));
    std::vector<std::size_t> seen;
    for (std::size_t c = 0; c < num_cameras; ++c) {
      const double depth = x.x() - centers[c].x();
      if (depth < kMinDepth || depth > kMaxDepth) continue;
      const auto px = project(p.cameras[c], x);
      if (px && std::abs(px->x()) < kHalfWidth && std::abs(px->y()) < kHalfHeight)
        seen.push_back(c);
    }
    if (seen.size() < 2) continue;
    const std::size_t l = p.points.size();
    p.points.push_back(x);
    for (auto c : seen) p.observations.push_back(Observation{c, l, Vec2::Zero()});
  }
  detail::finish_synthetic(p, opt, rng);
  validate(p);
  return p;
}

}  // namespace poba
