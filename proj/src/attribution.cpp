#include "gtselect/attribution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "gtselect/error.hpp"
#include "gtselect/rng.hpp"

namespace gtselect {

namespace {

void check_players(const CharacteristicFunction& v, std::span<const std::size_t> players) {
  std::vector<bool> seen(v.num_players(), false);
  for (const auto p : players) {
    if (p >= v.num_players() || seen[p]) {
      throw Error(ErrorCode::kInvalidArgument, "players must be distinct features of the game");
    }
    seen[p] = true;
  }
}

void check_exact_size(std::size_t count, std::size_t max_players) {
  if (count > max_players || count >= 63) {
    throw Error(ErrorCode::kTooManyPlayers,
                std::to_string(count) + " players exceed the exact Shapley limit of " +
                    std::to_string(std::min<std::size_t>(max_players, 62)));
  }
}

// s!(p-s-1)!/p! for s = 0..p-1, i.e. 1 / (p * C(p-1, s)).
std::vector<double> shapley_weights(std::size_t p) {
  std::vector<double> w(p);
  double binom = 1.0;  // C(p-1, s)
  for (std::size_t s = 0; s < p; ++s) {
    w[s] = 1.0 / (static_cast<double>(p) * binom);
    binom = binom * static_cast<double>(p - 1 - s) / static_cast<double>(s + 1);
  }
  return w;
}

Coalition coalition_from_mask(std::size_t num_players, std::span<const std::size_t> players,
                              std::uint64_t mask) {
  Coalition c(num_players);
  for (std::size_t k = 0; k < players.size(); ++k) {
    if ((mask >> k) & 1U) c.insert(players[k]);
  }
  return c;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::mutex error_mutex;
  std::exception_ptr error;
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<double> shapley_exact(CharacteristicFunction& v, std::span<const std::size_t> players,
                                  std::size_t max_players) {
  check_players(v, players);
  const std::size_t p = players.size();
  check_exact_size(p, max_players);
  if (p == 0) return {};

  const std::uint64_t total = std::uint64_t{1} << p;
  std::vector<double> values(total);
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    values[mask] = v(coalition_from_mask(v.num_players(), players, mask));
  }
  const auto w = shapley_weights(p);
  std::vector<double> phi(p, 0.0);
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t k = 0; k < p; ++k) {
      const std::uint64_t bit = std::uint64_t{1} << k;
      if (mask & bit) continue;
      phi[k] += w[size] * (values[mask | bit] - values[mask]);
    }
  }
  return phi;
}

double shapley_exact_single(CharacteristicFunction& v, std::span<const std::size_t> players,
                            std::size_t target, std::size_t max_players) {
  check_players(v, players);
  check_exact_size(players.size(), max_players);
  std::vector<std::size_t> others;
  bool found = false;
  for (const auto p : players) {
    if (p == target) found = true;
    else others.push_back(p);
  }
  if (!found) throw Error(ErrorCode::kInvalidArgument, "target is not among the players");

  const auto w = shapley_weights(players.size());
  const std::uint64_t total = std::uint64_t{1} << others.size();
  double phi = 0.0;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    const Coalition without = coalition_from_mask(v.num_players(), others, mask);
    const double base = v(without);
    const double joined = v(without.with(target));
    phi += w[static_cast<std::size_t>(std::popcount(mask))] * (joined - base);
  }
  return phi;
}

std::vector<double> cis_value(CharacteristicFunction& v, std::span<const std::size_t> players) {
  check_players(v, players);
  const std::size_t p = players.size();
  if (p == 0) throw Error(ErrorCode::kInvalidArgument, "CIS needs at least one player");
  std::vector<double> singles(p);
  for (std::size_t k = 0; k < p; ++k) {
    singles[k] = v(Coalition(v.num_players(), {players[k]}));
  }
  const double grand = v(Coalition(v.num_players(), players));
  const double surplus =
      (grand - std::accumulate(singles.begin(), singles.end(), 0.0)) / static_cast<double>(p);
  std::vector<double> out(p);
  for (std::size_t k = 0; k < p; ++k) out[k] = singles[k] + surplus;
  return out;
}

namespace {

struct MarginalAccumulator {
  std::vector<double> sum;
  std::vector<double> sum_sq;

  explicit MarginalAccumulator(std::size_t p) : sum(p, 0.0), sum_sq(p, 0.0) {}

  // Walks one ordering, adding each player's marginal contribution.
  void add_ordering(CharacteristicFunction& v, std::span<const std::size_t> order,
                    std::span<const std::size_t> position) {
    Coalition c(v.num_players());
    double previous = v(c);
    for (std::size_t k = 0; k < order.size(); ++k) {
      c.insert(order[k]);
      const double current = v(c);
      const double marginal = current - previous;
      sum[position[k]] += marginal;
      sum_sq[position[k]] += marginal * marginal;
      previous = current;
    }
  }

  MonteCarloResult finish(std::size_t perms) const {
    MonteCarloResult out;
    out.permutations = perms;
    const auto n = static_cast<double>(perms);
    for (std::size_t k = 0; k < sum.size(); ++k) {
      const double mean = sum[k] / n;
      out.values.push_back(mean);
      const double var = perms > 1 ? std::max(0.0, (sum_sq[k] - n * mean * mean) / (n - 1.0)) : 0.0;
      out.std_errors.push_back(std::sqrt(var / n));
    }
    return out;
  }
};

}  // namespace

MonteCarloResult shapley_mc(CharacteristicFunction& v, std::span<const std::size_t> players,
                            std::size_t n_perms, std::uint64_t seed) {
  check_players(v, players);
  if (n_perms < 1) throw Error(ErrorCode::kInvalidArgument, "n_perms must be at least 1");
  const std::size_t p = players.size();
  MarginalAccumulator acc(p);
  Rng rng(seed);
  std::vector<std::size_t> slots(p);
  std::vector<std::size_t> order(p);
  for (std::size_t perm = 0; perm < n_perms; ++perm) {
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(slots));
    for (std::size_t k = 0; k < p; ++k) order[k] = players[slots[k]];
    acc.add_ordering(v, order, slots);
  }
  return acc.finish(n_perms);
}

double shapley_mc_single(CharacteristicFunction& v, std::span<const std::size_t> players,
                         std::size_t target, std::size_t n_perms, std::uint64_t seed) {
  check_players(v, players);
  if (n_perms < 1) throw Error(ErrorCode::kInvalidArgument, "n_perms must be at least 1");
  const auto it = std::find(players.begin(), players.end(), target);
  if (it == players.end()) throw Error(ErrorCode::kInvalidArgument, "target is not among the players");
  const auto target_slot = static_cast<std::size_t>(it - players.begin());

  const std::size_t p = players.size();
  Rng rng(seed);
  std::vector<std::size_t> slots(p);
  double sum = 0.0;
  for (std::size_t perm = 0; perm < n_perms; ++perm) {
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(slots));
    Coalition prefix(v.num_players());
    for (const auto slot : slots) {
      if (slot == target_slot) break;
      prefix.insert(players[slot]);
    }
    const double base = v(prefix);
    sum += v(prefix.with(target)) - base;
  }
  return sum / static_cast<double>(n_perms);
}

MonteCarloResult shapley_mc_exhaustive(CharacteristicFunction& v,
                                       std::span<const std::size_t> players) {
  check_players(v, players);
  const std::size_t p = players.size();
  if (p > 10) {
    throw Error(ErrorCode::kTooManyPlayers, "exhaustive permutation mode is limited to 10 players");
  }
  MarginalAccumulator acc(p);
  std::vector<std::size_t> slots(p);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  std::vector<std::size_t> order(p);
  std::size_t count = 0;
  do {
    for (std::size_t k = 0; k < p; ++k) order[k] = players[slots[k]];
    acc.add_ordering(v, order, slots);
    ++count;
  } while (std::next_permutation(slots.begin(), slots.end()));
  return acc.finish(count);
}

// ---------------------------------------------------------------------------
// Feature graph

double FeatureGraph::density() const {
  if (num_nodes < 2) return 1.0;
  return static_cast<double>(edges.size()) /
         (static_cast<double>(num_nodes) * static_cast<double>(num_nodes - 1) / 2.0);
}

std::vector<std::vector<std::size_t>> FeatureGraph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(num_nodes);
  for (const auto& e : edges) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

bool FeatureGraph::connected() const {
  if (num_nodes <= 1) return true;
  const auto adj = adjacency();
  std::vector<bool> seen(num_nodes, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t visited = 1;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (const auto w : adj[u]) {
      if (!seen[w]) {
        seen[w] = true;
        ++visited;
        stack.push_back(w);
      }
    }
  }
  return visited == num_nodes;
}

std::vector<std::size_t> FeatureGraph::collaborators(std::size_t i) const {
  std::vector<std::size_t> out{i};
  for (const auto& e : edges) {
    if (e.a == i) out.push_back(e.b);
    if (e.b == i) out.push_back(e.a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double default_target_density(std::size_t num_nodes) {
  if (num_nodes < 2) return 1.0;
  return std::min(1.5 * 2.0 / static_cast<double>(num_nodes), 1.0);
}

std::size_t edge_budget(std::size_t num_nodes, double target_density) {
  const double pairs = static_cast<double>(num_nodes) * static_cast<double>(num_nodes - 1) / 2.0;
  if (num_nodes < 2) return 0;
  // The epsilon keeps exact products such as 0.5 * 16 from rounding up.
  return static_cast<std::size_t>(std::ceil(target_density * pairs - 1e-9));
}

Eigen::VectorXd zscore(const Eigen::VectorXd& v) {
  if (v.size() == 0) return v;
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().mean());
  if (!(sd > 0.0) || !std::isfinite(sd)) return Eigen::VectorXd::Zero(v.size());
  return (v.array() - mean) / sd;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / std::sqrt(aa * bb), -1.0, 1.0);
}

FeatureGraph complete_graph(const Eigen::MatrixXd& distance, std::vector<double> node_importance) {
  const auto m = static_cast<std::size_t>(distance.rows());
  if (distance.cols() != distance.rows() || node_importance.size() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "graph inputs disagree in size");
  }
  FeatureGraph g;
  g.num_nodes = m;
  g.distance = distance;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      g.edges.push_back({a, b, distance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))});
    }
  }
  g.target_distance.reserve(m);
  for (const double imp : node_importance) g.target_distance.push_back(1.0 - imp);
  g.node_importance = std::move(node_importance);
  return g;
}

FeatureGraph complete_feature_graph(const Dataset& d) {
  const std::size_t m = d.m();
  const Eigen::MatrixXd x = d.features();
  std::vector<Eigen::VectorXd> cols;
  cols.reserve(m);
  for (std::size_t j = 0; j < m; ++j) cols.push_back(zscore(x.col(static_cast<Eigen::Index>(j))));
  const Eigen::VectorXd target = zscore(d.targets());

  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const double w = 1.0 - cosine_similarity(cols[a], cols[b]);
      dist(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = w;
      dist(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = w;
    }
  }
  std::vector<double> importance(m);
  for (std::size_t j = 0; j < m; ++j) importance[j] = std::abs(cosine_similarity(cols[j], target));
  return complete_graph(dist, std::move(importance));
}

namespace {

// True if b is reachable from a in `adj` when the edge (a, b) is ignored.
bool reachable_without_edge(const std::vector<std::vector<bool>>& adj, std::size_t a,
                            std::size_t b) {
  const std::size_t m = adj.size();
  std::vector<bool> seen(m, false);
  std::vector<std::size_t> stack{a};
  seen[a] = true;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (std::size_t w = 0; w < m; ++w) {
      if (!adj[u][w] || seen[w]) continue;
      if ((u == a && w == b) || (u == b && w == a)) continue;
      if (w == b) return true;
      seen[w] = true;
      stack.push_back(w);
    }
  }
  return false;
}

}  // namespace

FeatureGraph prune_graph(FeatureGraph g, double target_density) {
  if (!(target_density > 0.0 && target_density <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target density must lie in (0, 1]");
  }
  const std::size_t m = g.num_nodes;
  const std::size_t budget = edge_budget(m, target_density);
  std::vector<std::vector<bool>> adj(m, std::vector<bool>(m, false));
  std::vector<std::vector<double>> weight(m, std::vector<double>(m, 0.0));
  for (const auto& e : g.edges) {
    adj[e.a][e.b] = adj[e.b][e.a] = true;
    weight[e.a][e.b] = weight[e.b][e.a] = e.weight;
  }
  std::size_t edge_count = g.edges.size();

  std::vector<std::size_t> visit(m);
  std::iota(visit.begin(), visit.end(), std::size_t{0});
  std::stable_sort(visit.begin(), visit.end(), [&](std::size_t a, std::size_t b) {
    return g.node_importance[a] < g.node_importance[b];
  });

  for (const auto u : visit) {
    if (edge_count <= budget) break;
    std::vector<std::size_t> incident;
    for (std::size_t w = 0; w < m; ++w) {
      if (adj[u][w]) incident.push_back(w);
    }
    std::stable_sort(incident.begin(), incident.end(), [&](std::size_t a, std::size_t b) {
      return weight[u][a] > weight[u][b];
    });
    for (const auto w : incident) {
      if (edge_count <= budget) break;
      if (!reachable_without_edge(adj, u, w)) continue;
      adj[u][w] = adj[w][u] = false;
      --edge_count;
    }
  }

  g.edges.clear();
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      if (adj[a][b]) g.edges.push_back({a, b, weight[a][b]});
    }
  }
  return g;
}

FeatureGraph build_feature_graph(const Dataset& d) {
  return prune_graph(complete_feature_graph(d), default_target_density(d.m()));
}

Eigen::VectorXd shapg(CharacteristicFunction& v, const FeatureGraph& g, const ShapGOptions& options) {
  if (options.l_threshold < 1) throw Error(ErrorCode::kInvalidArgument, "l must be at least 1");
  if (g.num_nodes != v.num_players()) {
    throw Error(ErrorCode::kDimensionMismatch, "graph and game disagree on the feature count");
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(g.num_nodes));
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    const auto members = g.collaborators(i);
    out(static_cast<Eigen::Index>(i)) =
        members.size() < options.l_threshold
            ? shapley_exact_single(v, members, i)
            : shapley_mc_single(v, members, i, options.mc_perms, derive_seed(options.seed, i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Importance

std::string_view to_string(AttributionMethod method) {
  switch (method) {
    case AttributionMethod::kShapG: return "shapg";
    case AttributionMethod::kPfi: return "pfi";
    case AttributionMethod::kShapley: return "shapley";
    case AttributionMethod::kCis: return "cis";
  }
  return "shapg";
}

AttributionMethod parse_attribution_method(std::string_view text) {
  if (text == "shapg") return AttributionMethod::kShapG;
  if (text == "pfi") return AttributionMethod::kPfi;
  if (text == "shapley") return AttributionMethod::kShapley;
  if (text == "cis") return AttributionMethod::kCis;
  throw Error(ErrorCode::kInvalidArgument, "unknown importance method '" + std::string(text) + "'");
}

std::vector<std::size_t> score_ranks(const Eigen::VectorXd& scores) {
  const auto m = static_cast<std::size_t>(scores.size());
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  std::vector<std::size_t> ranks(m);
  for (std::size_t r = 0; r < m; ++r) ranks[order[r]] = r + 1;
  return ranks;
}

std::string to_json(const ImportanceScores& s) {
  nlohmann::ordered_json j;
  j["method"] = s.method;
  j["char_fn"] = s.char_fn;
  j["seed"] = s.seed;
  const auto ranks = score_ranks(s.scores);
  auto entries = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    nlohmann::ordered_json e;
    e["feature"] = i < s.feature_names.size() ? s.feature_names[i] : "f" + std::to_string(i);
    e["score"] = s.scores(static_cast<Eigen::Index>(i));
    e["rank"] = ranks[i];
    entries.push_back(std::move(e));
  }
  j["scores"] = std::move(entries);
  j["eval_counts"] = {{"coalitions", s.eval_count}, {"games", s.contexts}};
  return j.dump(2) + "\n";
}

ImportanceScores importance_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ImportanceScores s;
    s.method = j.at("method").get<std::string>();
    s.char_fn = j.at("char_fn").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& entries = j.at("scores");
    s.scores.resize(static_cast<Eigen::Index>(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      s.feature_names.push_back(entries[i].at("feature").get<std::string>());
      s.scores(static_cast<Eigen::Index>(i)) = entries[i].at("score").get<double>();
    }
    if (j.contains("eval_counts")) {
      s.eval_count = j["eval_counts"].value("coalitions", std::size_t{0});
      s.contexts = j["eval_counts"].value("games", std::size_t{0});
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed importance JSON: ") + e.what());
  }
}

ImportanceScores pfi(const Model& model, const Dataset& eval, Metric metric, std::size_t repeats,
                     std::uint64_t seed) {
  if (repeats < 1) throw Error(ErrorCode::kInvalidArgument, "PFI needs at least one repeat");
  if (eval.n() == 0) throw Error(ErrorCode::kInvalidArgument, "PFI evaluation set is empty");
  Eigen::MatrixXd x = eval.features();
  const Eigen::VectorXd y = eval.targets();
  const double baseline = compute_metric(metric, model.predict_full(x), y);

  const std::size_t m = eval.m();
  Eigen::MatrixXd drops(static_cast<Eigen::Index>(repeats), static_cast<Eigen::Index>(m));
  std::vector<double> column(eval.n());
  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const Eigen::VectorXd original = x.col(jj);
    for (std::size_t r = 0; r < repeats; ++r) {
      std::copy(original.data(), original.data() + original.size(), column.begin());
      Rng rng(derive_seed(derive_seed(seed, j), r));
      rng.shuffle(std::span<double>(column));
      x.col(jj) = Eigen::Map<const Eigen::VectorXd>(column.data(), original.size());
      drops(static_cast<Eigen::Index>(r), jj) = baseline - compute_metric(metric, model.predict_full(x), y);
    }
    x.col(jj) = original;
  }

  ImportanceScores out;
  out.method = "pfi";
  out.char_fn = std::string(to_string(metric));
  out.seed = seed;
  out.feature_names = eval.feature_names();
  out.scores = drops.colwise().mean().transpose();
  out.per_repeat = std::move(drops);
  out.contexts = 1;
  return out;
}

ImportanceScores importance_over_sample(const AttributionConfig& config, const Model& model,
                                        const Dataset& data, std::span<const std::size_t> rows,
                                        const ReferenceVector& reference,
                                        const FeatureGraph* graph) {
  if (rows.empty()) throw Error(ErrorCode::kInvalidArgument, "importance needs at least one row");
  if (config.method == AttributionMethod::kPfi || config.char_fn == CharMethod::kGlobalPerf) {
    throw Error(ErrorCode::kInvalidArgument, "importance_over_sample needs a sample-level game");
  }
  const std::size_t m = data.m();
  std::optional<FeatureGraph> built;
  if (config.method == AttributionMethod::kShapG && graph == nullptr) {
    built = build_feature_graph(data.subset(rows));
    graph = &*built;
  }
  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});

  Eigen::MatrixXd per_sample(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
  std::vector<std::size_t> counts(rows.size(), 0);
  parallel_for(rows.size(), config.threads, [&](std::size_t k) {
    auto v = sample_game(config.char_fn, model, reference, data, rows[k]);
    const std::uint64_t seed = config.seed ^ static_cast<std::uint64_t>(rows[k]);
    Eigen::VectorXd scores(static_cast<Eigen::Index>(m));
    switch (config.method) {
      case AttributionMethod::kShapley: {
        const auto phi = shapley_exact(v, all, config.max_exact_players);
        scores = Eigen::Map<const Eigen::VectorXd>(phi.data(), static_cast<Eigen::Index>(m));
        break;
      }
      case AttributionMethod::kCis: {
        const auto cis = cis_value(v, all);
        scores = Eigen::Map<const Eigen::VectorXd>(cis.data(), static_cast<Eigen::Index>(m));
        break;
      }
      case AttributionMethod::kShapG:
        scores = shapg(v, *graph, {config.l_threshold, config.mc_perms, seed});
        break;
      case AttributionMethod::kPfi:
        break;
    }
    per_sample.row(static_cast<Eigen::Index>(k)) = scores.transpose();
    counts[k] = v.eval_count();
  });

  ImportanceScores out;
  out.method = std::string(to_string(config.method));
  out.char_fn = std::string(to_string(config.char_fn));
  out.seed = config.seed;
  out.feature_names = data.feature_names();
  out.scores = aggregate_sample_scores(per_sample, config.char_fn);
  out.per_sample = std::move(per_sample);
  out.sample_rows.assign(rows.begin(), rows.end());
  out.eval_count = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  out.contexts = rows.size();
  return out;
}

ImportanceScores compute_importance(const AttributionConfig& config, const Model& model,
                                    const Dataset& data, std::span<const std::size_t> rows,
                                    const ReferenceVector& reference) {
  if (rows.empty()) throw Error(ErrorCode::kInvalidArgument, "importance needs at least one row");
  const Metric metric = config.metric.value_or(default_metric(data.task()));
  if (config.method == AttributionMethod::kPfi) {
    return pfi(model, data.subset(rows), metric, config.pfi_repeats, config.seed);
  }
  if (config.char_fn != CharMethod::kGlobalPerf) {
    return importance_over_sample(config, model, data, rows, reference);
  }

  const Dataset eval = data.subset(rows);
  auto v = global_perf_game(model, reference, eval, metric);
  const std::size_t m = data.m();
  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Eigen::VectorXd scores(static_cast<Eigen::Index>(m));
  switch (config.method) {
    case AttributionMethod::kShapley: {
      const auto phi = shapley_exact(v, all, config.max_exact_players);
      scores = Eigen::Map<const Eigen::VectorXd>(phi.data(), static_cast<Eigen::Index>(m));
      break;
    }
    case AttributionMethod::kCis: {
      const auto cis = cis_value(v, all);
      scores = Eigen::Map<const Eigen::VectorXd>(cis.data(), static_cast<Eigen::Index>(m));
      break;
    }
    case AttributionMethod::kShapG:
      scores = shapg(v, build_feature_graph(eval), {config.l_threshold, config.mc_perms, config.seed});
      break;
    case AttributionMethod::kPfi:
      break;
  }
  ImportanceScores out;
  out.method = std::string(to_string(config.method));
  out.char_fn = std::string(to_string(config.char_fn));
  out.seed = config.seed;
  out.feature_names = data.feature_names();
  out.scores = std::move(scores);
  out.eval_count = v.eval_count();
  out.contexts = 1;
  return out;
}

}  // namespace gtselect
