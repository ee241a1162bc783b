#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "poba/bal_io.hpp"
#include "poba/landmark_blocks.hpp"
#include "poba/power_series.hpp"

namespace poba {

struct CameraClustering {
  /// camera index -> cluster id
  std::vector<std::size_t> assignment;
  /// cluster id -> sorted camera indices
  std::vector<std::vector<std::size_t>> clusters;
  /// landmarks observed from more than one cluster
  std::size_t cut_landmarks = 0;
  /// observations belonging to those landmarks
  std::size_t cut_observations = 0;

  std::size_t num_clusters() const { return clusters.size(); }
};

namespace detail {

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n), size(n, 1) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  std::vector<std::size_t> parent;
  std::vector<std::size_t> size;
};

}  // namespace detail

/// Cut statistics of an assignment against the problem's observations.
inline void compute_cut_statistics(const BalProblem& problem,
                                   CameraClustering& clustering) {
  std::vector<std::vector<std::size_t>> clusters_of_point(problem.num_points());
  std::vector<std::size_t> obs_count(problem.num_points(), 0);
  for (const auto& o : problem.observations) {
    clusters_of_point[o.point].push_back(clustering.assignment[o.camera]);
    ++obs_count[o.point];
  }
  clustering.cut_landmarks = 0;
  clustering.cut_observations = 0;
  for (std::size_t l = 0; l < problem.num_points(); ++l) {
    auto& c = clusters_of_point[l];
    std::sort(c.begin(), c.end());
    if (std::unique(c.begin(), c.end()) - c.begin() > 1) {
      ++clustering.cut_landmarks;
      clustering.cut_observations += obs_count[l];
    }
  }
}

/// Builds a clustering from an explicit camera -> cluster assignment.
inline CameraClustering clustering_from_assignment(
    const BalProblem& problem, const std::vector<std::size_t>& assignment) {
  check_size(static_cast<Eigen::Index>(assignment.size()),
             static_cast<Eigen::Index>(problem.num_cameras()), "assignment");
  CameraClustering out;
  out.assignment = assignment;
  const std::size_t k =
      assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  out.clusters.resize(k);
  for (std::size_t c = 0; c < assignment.size(); ++c)
    out.clusters[assignment[c]].push_back(c);
  for (const auto& cl : out.clusters)
    if (cl.empty()) throw std::invalid_argument("assignment leaves a cluster empty");
  compute_cut_statistics(problem, out);
  return out;
}

/// Greedy agglomeration on the covisibility graph: edges (weight = number
/// of co-observed landmarks) are merged heaviest first, ties broken by the
/// smaller camera pair, never exceeding max_cluster_size. The merge order is
/// fully determined by the data; seed is accepted for interface parity with
/// stochastic clusterers and does not alter the result.
inline CameraClustering cluster_cameras(const BalProblem& problem,
                                        std::size_t max_cluster_size,
                                        std::uint64_t seed = 0) {
  (void)seed;
  if (max_cluster_size < 1) throw std::invalid_argument("max_cluster_size must be >= 1");
  const std::size_t n_p = problem.num_cameras();

  std::vector<std::vector<std::size_t>> cams_of_point(problem.num_points());
  for (const auto& o : problem.observations) cams_of_point[o.point].push_back(o.camera);
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> weight;
  for (auto& cams : cams_of_point) {
    std::sort(cams.begin(), cams.end());
    for (std::size_t a = 0; a < cams.size(); ++a)
      for (std::size_t b = a + 1; b < cams.size(); ++b) ++weight[{cams[a], cams[b]}];
  }
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::size_t>> edges(
      weight.begin(), weight.end());
  std::stable_sort(edges.begin(), edges.end(), [](const auto& x, const auto& y) {
    return x.second > y.second;
  });

  detail::DisjointSets sets(n_p);
  for (const auto& [pair, w] : edges) {
    std::size_t a = sets.find(pair.first), b = sets.find(pair.second);
    if (a == b || sets.size[a] + sets.size[b] > max_cluster_size) continue;
    if (b < a) std::swap(a, b);
    sets.parent[b] = a;
    sets.size[a] += sets.size[b];
  }

  // Cluster ids ordered by each cluster's smallest camera index.
  std::vector<std::size_t> assignment(n_p);
  std::map<std::size_t, std::size_t> id_of_root;
  for (std::size_t c = 0; c < n_p; ++c) {
    const std::size_t root = sets.find(c);
    auto it = id_of_root.find(root);
    if (it == id_of_root.end()) it = id_of_root.emplace(root, id_of_root.size()).first;
    assignment[c] = it->second;
  }
  return clustering_from_assignment(problem, assignment);
}

/// Reduced system restricted to one camera cluster: only observation rows of
/// the cluster's cameras are kept, landmarks without such rows are dropped,
/// and the global damping diagonals are reused.
template <typename Scalar>
DampedSystem<Scalar> cluster_system(const DampedSystem<Scalar>& sys,
                                    const std::vector<std::size_t>& cameras) {
  std::vector<std::size_t> local(sys.num_cameras(), SIZE_MAX);
  for (std::size_t i = 0; i < cameras.size(); ++i) local[cameras[i]] = i;

  std::vector<LandmarkBlock<Scalar>> blocks;
  std::vector<double> d_l;
  for (const auto& b : sys.blocks()) {
    std::vector<std::size_t> rows;
    for (std::size_t j = 0; j < b.num_observations(); ++j)
      if (local[b.cameras[j]] != SIZE_MAX) rows.push_back(j);
    if (rows.empty()) continue;
    LandmarkBlock<Scalar> sub;
    sub.landmark = b.landmark;
    sub.cameras.reserve(rows.size());
    sub.storage.resize(2 * static_cast<Eigen::Index>(rows.size()), kBlockCols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      sub.cameras.push_back(local[b.cameras[rows[r]]]);
      sub.storage.template middleRows<2>(2 * static_cast<Eigen::Index>(r)) =
          b.storage.template middleRows<2>(2 * static_cast<Eigen::Index>(rows[r]));
    }
    for (int k = 0; k < kPointDim; ++k)
      d_l.push_back(sys.point_damping()[static_cast<Eigen::Index>(kPointDim * b.landmark + k)]);
    blocks.push_back(std::move(sub));
  }
  VecX d_p(static_cast<Eigen::Index>(kPoseDim * cameras.size()));
  for (std::size_t i = 0; i < cameras.size(); ++i)
    d_p.segment<kPoseDim>(static_cast<Eigen::Index>(kPoseDim * i)) =
        sys.pose_damping().template segment<kPoseDim>(static_cast<Eigen::Index>(kPoseDim * cameras[i]));
  const VecX d_l_vec = Eigen::Map<const VecX>(d_l.data(), static_cast<Eigen::Index>(d_l.size()));
  return DampedSystem<Scalar>(cameras.size(), std::move(blocks), sys.lambda(),
                              DampingMode::kJacobiScaled, &d_p, &d_l_vec, 1);
}

struct ClusteredSolve {
  VecX delta_p;
  std::vector<int> orders;
  bool max_order_hit = false;
  std::size_t subsystem_bytes = 0;
};

/// Solves each cluster's restricted reduced system with the power series and
/// concatenates the pose updates. Cross-cluster coupling is dropped.
template <typename Scalar>
ClusteredSolve solve_clustered(const DampedSystem<Scalar>& sys,
                               const CameraClustering& clustering,
                               double epsilon, int max_order) {
  check_size(static_cast<Eigen::Index>(clustering.assignment.size()),
             static_cast<Eigen::Index>(sys.num_cameras()), "clustering");
  const std::size_t k = clustering.num_clusters();
  std::vector<PowerSeriesResult> results(k);
  std::vector<std::size_t> bytes(k, 0);
  parallel_for(k, sys.num_threads(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t id = begin; id < end; ++id) {
      const auto sub = cluster_system(sys, clustering.clusters[id]);
      results[id] = power_series_solve(sub, epsilon, max_order);
      bytes[id] = sub.storage_account().total();
    }
  }, /*min_parallel=*/2);

  ClusteredSolve out;
  out.delta_p = VecX::Zero(sys.pose_dim());
  for (std::size_t id = 0; id < k; ++id) {
    const auto& cams = clustering.clusters[id];
    for (std::size_t i = 0; i < cams.size(); ++i)
      out.delta_p.segment<kPoseDim>(static_cast<Eigen::Index>(kPoseDim * cams[i])) =
          results[id].delta_p.template segment<kPoseDim>(static_cast<Eigen::Index>(kPoseDim * i));
    out.orders.push_back(results[id].order_used);
    out.max_order_hit = out.max_order_hit || results[id].max_order_hit;
    out.subsystem_bytes = std::max(out.subsystem_bytes, bytes[id]);
  }
  return out;
}

}  // namespace poba
