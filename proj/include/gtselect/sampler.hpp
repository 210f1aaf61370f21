#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gtselect/dataset.hpp"

namespace gtselect {

struct Clustering {
  Eigen::MatrixXd centers;              // k x d
  std::vector<std::size_t> assignment;  // length n
  double inertia = 0.0;
  // Inertia after each assignment step, starting with the seeding.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;

  std::size_t k() const { return static_cast<std::size_t>(centers.rows()); }
};

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tol = 1e-8;
};

// D^2-weighted seeding followed by Lloyd iterations. Points are the rows of
// `points`. Empty clusters are re-seeded with the point farthest from its
// center.
Clustering kmeans_pp(const Eigen::MatrixXd& points, std::size_t k,
                     std::uint64_t seed, const KMeansOptions& options = {});

// Sum of squared distances from each point to its assigned center.
double clustering_inertia(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers,
                          const std::vector<std::size_t>& assignment);

// s_i for each cluster: the first (s mod k) clusters get floor(s/k)+1.
std::vector<std::size_t> allocate_per_cluster(std::size_t s, std::size_t k);

// Positions into `cluster_points` ordered by distance to `center`; ties keep
// the lower original row id first.
std::vector<std::size_t> rank_by_center_distance(
    const Eigen::MatrixXd& points, const std::vector<std::size_t>& cluster_rows,
    const Eigen::VectorXd& center);

struct ClusterSelection {
  std::size_t cluster = 0;
  std::size_t size = 0;         // |C_i|
  std::size_t allocated = 0;    // s_i
  std::size_t stride = 0;       // Delta_i
  std::vector<std::size_t> ranks;  // chosen 0-based ranks, strided then redistributed
};

struct SampleIndices {
  std::uint64_t seed = 0;
  std::size_t s = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;
  std::vector<ClusterSelection> per_cluster;
};

// Z-scores columns, dropping zero-variance ones. If every column is constant
// a single zero column is returned.
Eigen::MatrixXd standardize_for_clustering(const Eigen::MatrixXd& x);

// Evenly spaced distance-ranked selection within precomputed clusters.
SampleIndices select_from_clusters(const Eigen::MatrixXd& points, const Clustering& clustering,
                                   std::size_t s);

// k-means++ clustering of the standardized features followed by
// select_from_clusters. k defaults to floor(sqrt(s)) clamped to [1, n].
SampleIndices diversity_sample(const Dataset& d, std::size_t s,
                               std::optional<std::size_t> k, std::uint64_t seed,
                               const KMeansOptions& options = {});

std::string to_json(const SampleIndices& sample);
SampleIndices sample_from_json(const std::string& text);

}  // namespace gtselect
