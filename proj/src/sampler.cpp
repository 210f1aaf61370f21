#include "gtselect/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gtselect/error.hpp"
#include "gtselect/rng.hpp"

namespace gtselect {

namespace {

using Index = Eigen::Index;

double squared_distance(const Eigen::MatrixXd& points, Index row,
                        const Eigen::MatrixXd& centers, Index c) {
  return (points.row(row) - centers.row(c)).squaredNorm();
}

// Nearest center per point (ties to the lowest center index). Returns the
// inertia, accumulated in row order.
double assign_points(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers,
                     std::vector<std::size_t>& assignment, std::vector<double>& dist) {
  double inertia = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Index best_c = 0;
    for (Index c = 0; c < centers.rows(); ++c) {
      const double d = squared_distance(points, i, centers, c);
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    assignment[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best_c);
    dist[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

Eigen::MatrixXd seed_centers(const Eigen::MatrixXd& points, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  Eigen::MatrixXd centers(static_cast<Index>(k), points.cols());
  const auto first = rng.below(n);
  centers.row(0) = points.row(static_cast<Index>(first));

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = squared_distance(points, static_cast<Index>(i), centers, 0);
  }
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cumulative = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cumulative += d2[i];
        if (cumulative > target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
      // Guard against rounding landing on a zero-weight tail point.
      while (d2[chosen] == 0.0 && chosen > 0) --chosen;
    } else {
      chosen = rng.below(n);
    }
    centers.row(static_cast<Index>(c)) = points.row(static_cast<Index>(chosen));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points, static_cast<Index>(i), centers,
                                               static_cast<Index>(c)));
    }
  }
  return centers;
}

}  // namespace

double clustering_inertia(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers,
                          const std::vector<std::size_t>& assignment) {
  double inertia = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    inertia += squared_distance(points, i, centers,
                                static_cast<Index>(assignment[static_cast<std::size_t>(i)]));
  }
  return inertia;
}

Clustering kmeans_pp(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                     const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
  if (k > n) {
    throw Error(ErrorCode::kKTooLarge,
                "k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  }
  if (!(options.tol >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "tol must be >= 0");

  Rng rng(seed);
  Clustering out;
  out.centers = seed_centers(points, k, rng);
  out.assignment.assign(n, 0);
  std::vector<double> dist(n);
  out.inertia = assign_points(points, out.centers, out.assignment, dist);
  out.inertia_history.push_back(out.inertia);

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    Eigen::MatrixXd updated = Eigen::MatrixXd::Zero(static_cast<Index>(k), points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      updated.row(static_cast<Index>(out.assignment[i])) += points.row(static_cast<Index>(i));
      ++counts[out.assignment[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        updated.row(static_cast<Index>(c)) /= static_cast<double>(counts[c]);
        continue;
      }
      // Re-seed with the farthest point that can leave its cluster.
      std::size_t far = n;
      double far_d = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || counts[out.assignment[i]] < 2) continue;
        if (dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      if (far == n) {
        updated.row(static_cast<Index>(c)) = out.centers.row(static_cast<Index>(c));
      } else {
        taken[far] = true;
        --counts[out.assignment[far]];
        updated.row(static_cast<Index>(c)) = points.row(static_cast<Index>(far));
      }
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, (updated.row(static_cast<Index>(c)) -
                               out.centers.row(static_cast<Index>(c))).norm());
    }
    out.centers = std::move(updated);
    out.inertia = assign_points(points, out.centers, out.assignment, dist);
    out.inertia_history.push_back(out.inertia);
    out.iterations = iter + 1;
    if (shift < options.tol) break;
  }
  return out;
}

std::vector<std::size_t> allocate_per_cluster(std::size_t s, std::size_t k) {
  if (s == 0 || k == 0) {
    throw Error(ErrorCode::kInvalidArgument, "s and k must be at least 1");
  }
  std::vector<std::size_t> out(k, s / k);
  for (std::size_t i = 0; i < s % k; ++i) ++out[i];
  return out;
}

std::vector<std::size_t> rank_by_center_distance(const Eigen::MatrixXd& points,
                                                 const std::vector<std::size_t>& cluster_rows,
                                                 const Eigen::VectorXd& center) {
  std::vector<double> d(cluster_rows.size());
  for (std::size_t p = 0; p < cluster_rows.size(); ++p) {
    d[p] = (points.row(static_cast<Index>(cluster_rows[p])).transpose() - center).squaredNorm();
  }
  std::vector<std::size_t> order(cluster_rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (d[a] != d[b]) return d[a] < d[b];
    return cluster_rows[a] < cluster_rows[b];
  });
  return order;
}

Eigen::MatrixXd standardize_for_clustering(const Eigen::MatrixXd& x) {
  std::vector<Index> keep;
  Eigen::VectorXd mean(x.cols());
  Eigen::VectorXd sd(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    mean(j) = x.col(j).mean();
    const double var = (x.col(j).array() - mean(j)).square().mean();
    sd(j) = std::sqrt(var);
    if (sd(j) > 0.0 && std::isfinite(sd(j))) keep.push_back(j);
  }
  if (keep.empty()) return Eigen::MatrixXd::Zero(x.rows(), 1);
  Eigen::MatrixXd z(x.rows(), static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    const Index j = keep[c];
    z.col(static_cast<Index>(c)) = (x.col(j).array() - mean(j)) / sd(j);
  }
  return z;
}

SampleIndices select_from_clusters(const Eigen::MatrixXd& points, const Clustering& clustering,
                                   std::size_t s) {
  const auto n = static_cast<std::size_t>(points.rows());
  const std::size_t k = clustering.k();
  if (s == 0) throw Error(ErrorCode::kInvalidArgument, "sample size must be at least 1");
  if (s > n) {
    throw Error(ErrorCode::kSampleTooLarge,
                "s=" + std::to_string(s) + " exceeds n=" + std::to_string(n));
  }

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < n; ++i) members[clustering.assignment[i]].push_back(i);

  const auto alloc = allocate_per_cluster(s, k);
  SampleIndices out;
  out.s = s;
  out.k = k;
  std::vector<std::vector<std::size_t>> ranked(k);
  std::vector<std::vector<bool>> chosen(k);
  std::size_t deficit = 0;

  for (std::size_t c = 0; c < k; ++c) {
    ClusterSelection sel;
    sel.cluster = c;
    sel.size = members[c].size();
    sel.allocated = alloc[c];
    chosen[c].assign(sel.size, false);
    if (sel.size > 0) {
      const auto order = rank_by_center_distance(points, members[c],
                                                 clustering.centers.row(static_cast<Index>(c)).transpose());
      ranked[c].reserve(order.size());
      for (const auto p : order) ranked[c].push_back(members[c][p]);
    }
    if (sel.allocated > 0 && sel.size > 0) {
      sel.stride = std::max<std::size_t>(1, sel.size / sel.allocated);
      for (std::size_t j = 0; j < sel.allocated && j * sel.stride < sel.size; ++j) {
        sel.ranks.push_back(j * sel.stride);
        chosen[c][j * sel.stride] = true;
      }
    }
    deficit += sel.allocated - sel.ranks.size();
    out.per_cluster.push_back(std::move(sel));
  }

  // Shortfall goes round-robin to clusters with unchosen points, largest
  // cluster first, lowest unchosen rank first.
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return members[a].size() > members[b].size();
  });
  std::vector<std::size_t> cursor(k, 0);
  while (deficit > 0) {
    bool progressed = false;
    for (const std::size_t c : order) {
      if (deficit == 0) break;
      while (cursor[c] < chosen[c].size() && chosen[c][cursor[c]]) ++cursor[c];
      if (cursor[c] >= chosen[c].size()) continue;
      chosen[c][cursor[c]] = true;
      out.per_cluster[c].ranks.push_back(cursor[c]);
      --deficit;
      progressed = true;
    }
    if (!progressed) break;
  }

  for (std::size_t c = 0; c < k; ++c) {
    auto& ranks = out.per_cluster[c].ranks;
    std::sort(ranks.begin(), ranks.end());
    for (const auto r : ranks) out.indices.push_back(ranked[c][r]);
  }
  return out;
}

SampleIndices diversity_sample(const Dataset& d, std::size_t s, std::optional<std::size_t> k,
                               std::uint64_t seed, const KMeansOptions& options) {
  if (s == 0) throw Error(ErrorCode::kInvalidArgument, "sample size must be at least 1");
  if (s > d.n()) {
    throw Error(ErrorCode::kSampleTooLarge,
                "s=" + std::to_string(s) + " exceeds n=" + std::to_string(d.n()));
  }
  std::size_t clusters = 0;
  if (k) {
    clusters = *k;
  } else {
    clusters = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(s))));
    // Exact integer square root guard.
    while ((clusters + 1) * (clusters + 1) <= s) ++clusters;
    while (clusters * clusters > s) --clusters;
    clusters = std::clamp<std::size_t>(clusters, 1, d.n());
  }
  const Eigen::MatrixXd points = standardize_for_clustering(d.features());
  const Clustering clustering = kmeans_pp(points, clusters, seed, options);
  SampleIndices out = select_from_clusters(points, clustering, s);
  out.seed = seed;
  return out;
}

std::string to_json(const SampleIndices& sample) {
  nlohmann::ordered_json j;
  j["seed"] = sample.seed;
  j["s"] = sample.s;
  j["k"] = sample.k;
  j["indices"] = sample.indices;
  return j.dump(2) + "\n";
}

SampleIndices sample_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SampleIndices out;
    out.seed = j.at("seed").get<std::uint64_t>();
    out.s = j.at("s").get<std::size_t>();
    out.k = j.at("k").get<std::size_t>();
    out.indices = j.at("indices").get<std::vector<std::size_t>>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed sample JSON: ") + e.what());
  }
}

}  // namespace gtselect
