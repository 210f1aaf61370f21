#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtselect/dataset.hpp"
#include "gtselect/game.hpp"
#include "gtselect/models.hpp"

namespace gtselect {

// ---------------------------------------------------------------------------
// Cooperative-game solutions. `players` lists the participating features;
// every other feature stays absent from all coalitions. Results are aligned
// with `players`.

inline constexpr std::size_t kDefaultMaxExactPlayers = 20;

// Weighted marginal-contribution formula over all 2^|players| coalitions.
std::vector<double> shapley_exact(CharacteristicFunction& v, std::span<const std::size_t> players,
                                  std::size_t max_players = kDefaultMaxExactPlayers);

// Exact Shapley component of a single player `target` (a member of
// `players`); evaluates the same coalitions as shapley_exact.
double shapley_exact_single(CharacteristicFunction& v, std::span<const std::size_t> players,
                            std::size_t target, std::size_t max_players = kDefaultMaxExactPlayers);

// CIS_i = v({i}) + (v(M) - sum_j v({j})) / M using M+1 coalition values.
std::vector<double> cis_value(CharacteristicFunction& v, std::span<const std::size_t> players);

struct MonteCarloResult {
  std::vector<double> values;
  std::vector<double> std_errors;  // sample std of the marginals / sqrt(perms)
  std::size_t permutations = 0;
};

// Average marginal contributions over `n_perms` seeded uniform permutations.
MonteCarloResult shapley_mc(CharacteristicFunction& v, std::span<const std::size_t> players,
                            std::size_t n_perms, std::uint64_t seed);

// Same permutation stream as shapley_mc, but only `target`'s marginal is
// evaluated (two coalitions per permutation).
double shapley_mc_single(CharacteristicFunction& v, std::span<const std::size_t> players,
                         std::size_t target, std::size_t n_perms, std::uint64_t seed);

// Every permutation of `players` exactly once (|players|! of them).
MonteCarloResult shapley_mc_exhaustive(CharacteristicFunction& v,
                                       std::span<const std::size_t> players);

// ---------------------------------------------------------------------------
// Feature graph for collaborator sets.

struct GraphEdge {
  std::size_t a = 0;  // a < b
  std::size_t b = 0;
  double weight = 0.0;  // 1 - cosine similarity, in [0, 2]
};

struct FeatureGraph {
  std::size_t num_nodes = 0;
  std::vector<GraphEdge> edges;
  // |cosine similarity| of each feature with the target; pruning visits
  // features in ascending order of this value.
  std::vector<double> node_importance;
  // 1 - node_importance.
  std::vector<double> target_distance;
  // Full pairwise cosine-distance matrix (kept after pruning).
  Eigen::MatrixXd distance;

  double density() const;
  std::vector<std::vector<std::size_t>> adjacency() const;
  bool connected() const;
  // C_i = {i} + neighbours(i), ascending.
  std::vector<std::size_t> collaborators(std::size_t i) const;
};

// min(1.5 * 2/M, 1): 1.5x the density of a spanning tree, capped at 1.
double default_target_density(std::size_t num_nodes);
// ceil(target_density * M(M-1)/2).
std::size_t edge_budget(std::size_t num_nodes, double target_density);

// Cosine similarity of z-scored columns; zero-norm columns have similarity 0.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
Eigen::VectorXd zscore(const Eigen::VectorXd& v);

// Complete graph from pairwise distances and per-node target importance.
FeatureGraph complete_graph(const Eigen::MatrixXd& distance, std::vector<double> node_importance);
FeatureGraph complete_feature_graph(const Dataset& d);

// Visits features from least to most target-correlated and removes their
// incident edges heaviest first, skipping removals that would disconnect
// the graph, until |E| <= edge_budget. The guard may leave more edges.
FeatureGraph prune_graph(FeatureGraph g, double target_density);

FeatureGraph build_feature_graph(const Dataset& d);

struct ShapGOptions {
  std::size_t l_threshold = 15;
  std::size_t mc_perms = 200;
  std::uint64_t seed = 0;
};

// Per-feature Shapley value within its collaborator subgame: exact when
// |C_i| < l_threshold, Monte Carlo otherwise. Length M.
Eigen::VectorXd shapg(CharacteristicFunction& v, const FeatureGraph& g, const ShapGOptions& options);

// ---------------------------------------------------------------------------
// Importance scores.

enum class AttributionMethod { kShapG, kPfi, kShapley, kCis };

std::string_view to_string(AttributionMethod method);
AttributionMethod parse_attribution_method(std::string_view text);

struct ImportanceScores {
  std::string method;
  std::string char_fn;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  Eigen::VectorXd scores;
  // Sample-level methods: one row per observation, in `sample_rows` order.
  std::optional<Eigen::MatrixXd> per_sample;
  std::vector<std::size_t> sample_rows;
  // PFI: one row per repeat of score drops.
  std::optional<Eigen::MatrixXd> per_repeat;
  std::size_t eval_count = 0;     // distinct coalitions, summed over games
  std::size_t contexts = 0;       // number of games evaluated

  std::size_t size() const { return static_cast<std::size_t>(scores.size()); }
};

// 1-based ranks, highest score first; ties go to the lower index.
std::vector<std::size_t> score_ranks(const Eigen::VectorXd& scores);

std::string to_json(const ImportanceScores& scores);
ImportanceScores importance_from_json(const std::string& text);

// Mean over repeats of (baseline metric - metric with one column shuffled).
ImportanceScores pfi(const Model& model, const Dataset& eval, Metric metric, std::size_t repeats,
                     std::uint64_t seed);

struct AttributionConfig {
  AttributionMethod method = AttributionMethod::kShapG;
  CharMethod char_fn = CharMethod::kSamplePerf;
  std::optional<Metric> metric;  // defaults by task
  std::size_t l_threshold = 15;
  std::size_t mc_perms = 200;
  std::size_t max_exact_players = kDefaultMaxExactPlayers;
  std::size_t pfi_repeats = 5;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// One sample-level game per listed row, attribution per game, then
// aggregation. `graph` is required for ShapG (built from the rows when null).
ImportanceScores importance_over_sample(const AttributionConfig& config, const Model& model,
                                        const Dataset& data, std::span<const std::size_t> rows,
                                        const ReferenceVector& reference,
                                        const FeatureGraph* graph = nullptr);

// Dispatches on method and characteristic function: PFI and global-perf use
// the listed rows as one evaluation set, the others average per-row games.
ImportanceScores compute_importance(const AttributionConfig& config, const Model& model,
                                    const Dataset& data, std::span<const std::size_t> rows,
                                    const ReferenceVector& reference);

}  // namespace gtselect
