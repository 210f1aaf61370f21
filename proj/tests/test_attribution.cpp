#include <doctest.h>

#include <numeric>

#include "gtselect/attribution.hpp"
#include "gtselect/error.hpp"
#include "support.hpp"

using namespace gtselect;

namespace {

CharacteristicFunction additive(const std::vector<double>& w) {
  return CharacteristicFunction(w.size(), [w](const Coalition& s) {
    double total = 0.0;
    for (const auto p : s.members()) total += w[p];
    return total;
  });
}

double value_of(const testing::TableGame& g, std::initializer_list<std::size_t> members) {
  std::uint64_t mask = 0;
  for (const auto m : members) mask |= std::uint64_t{1} << m;
  return g(mask);
}

FeatureGraph graph_with_edges(std::size_t m, const std::vector<std::pair<std::size_t, std::size_t>>& e) {
  FeatureGraph g;
  g.num_nodes = m;
  g.node_importance.assign(m, 0.5);
  g.target_distance.assign(m, 0.5);
  g.distance = Eigen::MatrixXd::Zero(m, m);
  for (const auto& [a, b] : e) g.edges.push_back({a, b, 0.5});
  return g;
}

}  // namespace

TEST_CASE("two-player Shapley closed form") {
  testing::TableGame g{2, {0.0, 1.0, 2.0, 4.0}};
  auto v = g.function();
  const auto players = testing::iota(2);
  const auto phi = shapley_exact(v, players);
  CHECK(phi[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(phi[1] == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("additive game Shapley equals the weights") {
  const std::vector<double> w{0.5, -1.25, 3.0, 0.0, 7.5};
  auto v = additive(w);
  const auto players = testing::iota(5);
  const auto phi = shapley_exact(v, players);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(phi[i] == doctest::Approx(w[i]).epsilon(1e-14));
  const auto mc = shapley_mc(v, players, 17, 3);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(mc.values[i] == doctest::Approx(w[i]).epsilon(1e-14));
}

TEST_CASE("exact Shapley matches permutation brute force") {
  for (std::size_t m = 1; m <= 6; ++m) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto g = testing::random_game(m, seed * 31 + m);
      auto v = g.function();
      const auto players = testing::iota(m);
      const auto phi = shapley_exact(v, players);
      const auto oracle = testing::brute_force_shapley(g);
      for (std::size_t i = 0; i < m; ++i) CHECK(std::abs(phi[i] - oracle[i]) <= 1e-12);
      CHECK(v.eval_count() == (std::size_t{1} << m));
    }
  }
}

TEST_CASE("exact Shapley on a player subset ignores everyone else") {
  // Players {1, 3} of a 4-feature game form a two-player subgame.
  const auto g = testing::random_game(4, 5);
  auto v = g.function();
  const std::vector<std::size_t> players{1, 3};
  const auto phi = shapley_exact(v, players);
  const double e = value_of(g, {}), a = value_of(g, {1}), b = value_of(g, {3}), ab = value_of(g, {1, 3});
  CHECK(phi[0] == doctest::Approx(0.5 * (a - e) + 0.5 * (ab - b)).epsilon(1e-14));
  CHECK(phi[1] == doctest::Approx(0.5 * (b - e) + 0.5 * (ab - a)).epsilon(1e-14));
  CHECK(shapley_exact_single(v, players, 3) == phi[1]);
}

TEST_CASE("exact Shapley refuses too many players") {
  CharacteristicFunction v(21, [](const Coalition&) { return 0.0; });
  const auto players = testing::iota(21);
  try {
    shapley_exact(v, players);
    FAIL("expected TooManyPlayers");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooManyPlayers);
  }
}

TEST_CASE("property: efficiency, dummy and symmetry") {
  auto rng = testing::engine(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 2 + trial % 7;
    auto g = testing::random_game(m, 500 + trial);
    // Players 0 and 1 are interchangeable (m > 2); player m-1 is a dummy.
    if (m > 2) {
      for (std::uint64_t mask = 0; mask < g.value.size(); ++mask) {
        const bool a = mask & 1U, b = (mask >> 1) & 1U;
        if (a && !b) g.value[mask] = g.value[(mask & ~std::uint64_t{1}) | 2U];
      }
    }
    for (std::uint64_t mask = 0; mask < g.value.size(); ++mask) {
      if ((mask >> (m - 1)) & 1U) g.value[mask] = g.value[mask & ~(std::uint64_t{1} << (m - 1))];
    }
    auto v = g.function();
    const auto players = testing::iota(m);
    const auto phi = shapley_exact(v, players);
    const double total = std::accumulate(phi.begin(), phi.end(), 0.0);
    const double target = g.value.back() - g.value.front();
    CHECK(std::abs(total - target) <= 1e-9 * std::max(1.0, std::abs(target)));
    CHECK(phi[m - 1] == 0.0);
    if (m > 2) CHECK(phi[0] == doctest::Approx(phi[1]).epsilon(1e-12));
    const auto mc = shapley_mc(v, players, 50, rng());
    CHECK(mc.values[m - 1] == 0.0);
  }
}

TEST_CASE("CIS examples") {
  testing::TableGame g{2, {0.0, 1.0, 2.0, 4.0}};
  auto v = g.function();
  const auto cis = cis_value(v, testing::iota(2));
  CHECK(cis[0] == 1.5);
  CHECK(cis[1] == 2.5);
  CHECK(v.eval_count() == 3);

  testing::TableGame single{1, {-3.0, 8.0}};
  auto s = single.function();
  CHECK(cis_value(s, testing::iota(1))[0] == 8.0);
}

TEST_CASE("property: CIS matches its closed form and sums to the grand value") {
  for (std::size_t m = 1; m <= 8; ++m) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto g = testing::random_game(m, 900 + 10 * m + seed);
      auto v = g.function();
      const auto cis = cis_value(v, testing::iota(m));
      double singles = 0.0;
      for (std::size_t j = 0; j < m; ++j) singles += g(std::uint64_t{1} << j);
      const double grand = g.value.back();
      double total = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        CHECK(std::abs(cis[i] - (g(std::uint64_t{1} << i) + (grand - singles) / m)) <= 1e-12);
        total += cis[i];
      }
      CHECK(std::abs(total - grand) <= 1e-9 * std::max(1.0, std::abs(grand)));
      if (m >= 2) CHECK(v.eval_count() == m + 1);
    }
  }
}

TEST_CASE("exhaustive Monte Carlo equals exact Shapley") {
  for (std::size_t m = 1; m <= 5; ++m) {
    const auto g = testing::random_game(m, 70 + m);
    auto v = g.function();
    const auto players = testing::iota(m);
    const auto exact = shapley_exact(v, players);
    const auto mc = shapley_mc_exhaustive(v, players);
    CHECK(mc.permutations == static_cast<std::size_t>(std::tgamma(m + 1) + 0.5));
    for (std::size_t i = 0; i < m; ++i) CHECK(std::abs(mc.values[i] - exact[i]) <= 1e-12);
  }
}

TEST_CASE("Monte Carlo estimates stay within three standard errors") {
  testing::TableGame g{2, {0.0, 1.0, 2.0, 4.0}};
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto v = g.function();
    const auto mc = shapley_mc(v, testing::iota(2), 10000, seed);
    bool ok = true;
    for (const std::size_t i : {0, 1}) {
      const double exact = i == 0 ? 1.5 : 2.5;
      ok = ok && std::abs(mc.values[i] - exact) <= 3 * mc.std_errors[i] + 1e-12;
    }
    inside += ok;
  }
  // Each seed lands inside three standard errors with probability ~0.997.
  CHECK(inside >= 19);
}

TEST_CASE("single-target Monte Carlo follows the shared permutation stream") {
  const auto g = testing::random_game(6, 12);
  auto v = g.function();
  const auto players = testing::iota(6);
  const auto all = shapley_mc(v, players, 40, 99);
  for (std::size_t i = 0; i < 6; ++i) {
    auto fresh = g.function();
    CHECK(shapley_mc_single(fresh, players, i, 40, 99) == doctest::Approx(all.values[i]).epsilon(1e-13));
  }
  auto again = g.function();
  CHECK(shapley_mc(again, players, 40, 99).values == all.values);
}

TEST_CASE("graph density and budget") {
  CHECK(default_target_density(3) == 1.0);
  CHECK(default_target_density(6) == doctest::Approx(0.5));
  CHECK(edge_budget(6, 0.5) == 8);
  CHECK(edge_budget(3, 1.0) == 3);
}

TEST_CASE("feature graph examples") {
  const auto syn = testing::synthetic_recovery(200, 3);
  std::vector<std::size_t> first_three{0, 1, 2};
  std::vector<FeatureColumn> cols(syn.data.columns().begin(), syn.data.columns().begin() + 3);
  const Dataset three(cols, syn.data.target(), TaskKind::kRegression);
  const FeatureGraph g3 = build_feature_graph(three);
  CHECK(g3.edges.size() == 3);

  std::vector<FeatureColumn> six(syn.data.columns().begin(), syn.data.columns().begin() + 6);
  const FeatureGraph g6 = build_feature_graph(Dataset(six, syn.data.target(), TaskKind::kRegression));
  CHECK(g6.edges.size() <= 8);
  CHECK(g6.connected());

  // A column and its affine copy are at distance 0.
  std::vector<FeatureColumn> dup(syn.data.columns().begin(), syn.data.columns().begin() + 2);
  FeatureColumn copy = dup[0];
  copy.name = "copy";
  for (auto& v : copy.values) v = 3.0 * v + 2.0;
  dup.push_back(copy);
  const FeatureGraph gd = complete_feature_graph(Dataset(dup, syn.data.target(), TaskKind::kRegression));
  bool found = false;
  for (const auto& e : gd.edges) {
    if (e.a == 0 && e.b == 2) {
      CHECK(e.weight == 0.0);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("pruning guards connectivity") {
  const auto syn = testing::synthetic_recovery(100, 8);
  const FeatureGraph full = complete_feature_graph(syn.data);
  CHECK(prune_graph(full, 1.0).edges.size() == full.edges.size());

  // A budget of one edge on ten nodes can only shrink to a spanning tree.
  const FeatureGraph tree = prune_graph(full, 0.01);
  CHECK(tree.connected());
  CHECK(tree.edges.size() == 9);
  CHECK(tree.edges.size() > edge_budget(10, 0.01));

  Eigen::MatrixXd d2(2, 2);
  d2 << 0, 1.5, 1.5, 0;
  const FeatureGraph pair = prune_graph(complete_graph(d2, {0.1, 0.2}), 0.01);
  CHECK(pair.edges.size() == 1);
}

TEST_CASE("property: pruned graphs are connected and within budget") {
  for (std::size_t m = 3; m <= 20; ++m) {
    const Eigen::MatrixXd x = testing::gaussian(80, m, m);
    const Dataset d = testing::make_regression(x, x.col(0) + 0.5 * x.col(m - 1));
    const FeatureGraph g = build_feature_graph(d);
    CHECK(g.connected());
    CHECK(g.edges.size() <= std::max(edge_budget(m, default_target_density(m)), m - 1));
  }
}

TEST_CASE("ShapG on a complete graph with large l is exact Shapley") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = testing::random_game(4, 300 + seed);
    auto v = g.function();
    const auto exact = shapley_exact(v, testing::iota(4));
    const FeatureGraph graph = graph_with_edges(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    auto w = g.function();
    const Eigen::VectorXd s = shapg(w, graph, {5, 200, seed});
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(s(i) - exact[i]) <= 1e-12);
  }
}

TEST_CASE("ShapG on a path graph uses two-player subgames at the ends") {
  const auto g = testing::random_game(3, 41);
  auto v = g.function();
  const FeatureGraph path = graph_with_edges(3, {{0, 1}, {1, 2}});
  const Eigen::VectorXd s = shapg(v, path, {15, 200, 0});
  const double expect0 = 0.5 * (value_of(g, {0}) - value_of(g, {})) +
                         0.5 * (value_of(g, {0, 1}) - value_of(g, {1}));
  CHECK(s(0) == doctest::Approx(expect0).epsilon(1e-14));
  const double expect2 = 0.5 * (value_of(g, {2}) - value_of(g, {})) +
                         0.5 * (value_of(g, {1, 2}) - value_of(g, {1}));
  CHECK(s(2) == doctest::Approx(expect2).epsilon(1e-14));
}

TEST_CASE("ShapG with l = 1 is seeded Monte Carlo") {
  const auto g = testing::random_game(5, 8);
  const FeatureGraph graph = graph_with_edges(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}});
  auto a = g.function();
  auto b = g.function();
  CHECK(shapg(a, graph, {1, 30, 7}) == shapg(b, graph, {1, 30, 7}));
  CHECK_THROWS_AS(shapg(a, graph, {0, 30, 7}), Error);
}

TEST_CASE("PFI examples") {
  const auto syn = testing::synthetic_recovery(120, 6);
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(10);
  coef.head(5) = syn.beta;
  const Model m = ridge_model(coef, 0.0);
  const Eigen::MatrixXd before = syn.data.features();
  const ImportanceScores s = pfi(m, syn.data, Metric::kR2, 5, 3);
  REQUIRE(s.per_repeat.has_value());
  for (Eigen::Index r = 0; r < 5; ++r) {
    for (Eigen::Index j = 5; j < 10; ++j) CHECK((*s.per_repeat)(r, j) == 0.0);
  }
  for (Eigen::Index j = 0; j < 5; ++j) CHECK(s.scores(j) > 0.0);
  CHECK(syn.data.features() == before);
  CHECK(pfi(m, syn.data, Metric::kR2, 5, 3).scores == s.scores);

  const Dataset one = syn.data.subset(std::vector<std::size_t>{4});
  const ImportanceScores o = pfi(m, one, Metric::kNegMae, 3, 1);
  CHECK(o.scores.isZero(0.0));
}

TEST_CASE("PFI ranks a real feature above noise") {
  auto rng = testing::engine(5);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(300, 2);
  Eigen::VectorXd y(300);
  for (int i = 0; i < 300; ++i) {
    x(i, 0) = z(rng);
    x(i, 1) = z(rng);
    y(i) = 3 * x(i, 0) + 0.1 * z(rng);
  }
  const Dataset d = testing::make_regression(x, y);
  const Model m = fit({RidgeParams{}, TaskKind::kRegression, 0}, d, {true, true});
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ImportanceScores s = pfi(m, d, Metric::kR2, 5, seed);
    CHECK(s.scores(0) > s.scores(1));
  }
}

TEST_CASE("importance over a sample") {
  const auto syn = testing::synthetic_recovery(40, 9);
  const Model m = fit({RidgeParams{}, TaskKind::kRegression, 0}, syn.data, std::vector<bool>(10, true));
  const ReferenceVector r = compute_reference_vector(syn.data, ReferenceStrategy::kMean);
  AttributionConfig cfg;
  cfg.method = AttributionMethod::kShapley;
  cfg.max_exact_players = 10;

  SUBCASE("one observation equals its own game") {
    for (const CharMethod method : {CharMethod::kModelOutput, CharMethod::kSamplePerf}) {
      cfg.char_fn = method;
      const std::vector<std::size_t> rows{7};
      const ImportanceScores s = importance_over_sample(cfg, m, syn.data, rows, r);
      auto v = sample_game(method, m, r, syn.data, 7);
      const auto exact = shapley_exact(v, testing::iota(10));
      for (std::size_t i = 0; i < 10; ++i) {
        const double expect = method == CharMethod::kModelOutput ? std::abs(exact[i]) : exact[i];
        CHECK(s.scores(i) == doctest::Approx(expect).epsilon(1e-14));
      }
    }
  }

  SUBCASE("duplicating every observation leaves the aggregate unchanged") {
    for (const AttributionMethod method : {AttributionMethod::kShapG, AttributionMethod::kCis}) {
      cfg.method = method;
      cfg.l_threshold = 3;
      cfg.mc_perms = 20;
      const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
      const std::vector<std::size_t> twice{0, 1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5};
      const FeatureGraph graph = build_feature_graph(syn.data);
      const auto a = importance_over_sample(cfg, m, syn.data, rows, r, &graph);
      const auto b = importance_over_sample(cfg, m, syn.data, twice, r, &graph);
      for (std::size_t i = 0; i < 10; ++i) CHECK(a.scores(i) == doctest::Approx(b.scores(i)).epsilon(1e-13));
    }
  }

  SUBCASE("threads do not change the result") {
    cfg.method = AttributionMethod::kShapG;
    cfg.l_threshold = 4;
    const auto rows = testing::iota(40);
    const auto a = importance_over_sample(cfg, m, syn.data, rows, r);
    cfg.threads = 4;
    const auto b = importance_over_sample(cfg, m, syn.data, rows, r);
    CHECK(a.scores == b.scores);
    CHECK(a.eval_count == b.eval_count);
  }
}

TEST_CASE("sample-perf on an additive model averages per-observation exact values") {
  // For a linear model and model-output games, phi_i = beta_i (x_i - r_i).
  const auto syn = testing::synthetic_recovery(25, 10);
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(10);
  coef.head(5) = syn.beta;
  const Model m = ridge_model(coef, 0.3);
  const ReferenceVector r = compute_reference_vector(syn.data, ReferenceStrategy::kMedian);
  AttributionConfig cfg;
  cfg.method = AttributionMethod::kShapley;
  cfg.char_fn = CharMethod::kModelOutput;
  const auto rows = testing::iota(25);
  const auto s = compute_importance(cfg, m, syn.data, rows, r);
  for (std::size_t i = 0; i < 10; ++i) {
    double mean_abs = 0.0;
    for (std::size_t row = 0; row < 25; ++row) mean_abs += std::abs(coef(i) * (syn.data.at(row, i) - r.values[i]));
    CHECK(s.scores(i) == doctest::Approx(mean_abs / 25).epsilon(1e-12));
  }
}

TEST_CASE("score producers are deterministic given their seeds") {
  const auto syn = testing::synthetic_recovery(60, 11);
  const Model m = fit({RidgeParams{}, TaskKind::kRegression, 0}, syn.data, std::vector<bool>(10, true));
  const ReferenceVector r = compute_reference_vector(syn.data, ReferenceStrategy::kMean);
  const auto rows = testing::iota(30);
  for (const auto method : {AttributionMethod::kShapG, AttributionMethod::kPfi, AttributionMethod::kShapley,
                            AttributionMethod::kCis}) {
    for (const auto ch : {CharMethod::kModelOutput, CharMethod::kSamplePerf, CharMethod::kGlobalPerf}) {
      AttributionConfig cfg;
      cfg.method = method;
      cfg.char_fn = ch;
      cfg.l_threshold = 3;
      cfg.mc_perms = 10;
      cfg.seed = 5;
      CHECK(to_json(compute_importance(cfg, m, syn.data, rows, r)) ==
            to_json(compute_importance(cfg, m, syn.data, rows, r)));
    }
  }
}

TEST_CASE("score ranks and json round trip") {
  CHECK(score_ranks(Eigen::Vector4d(0.5, 2.0, 0.5, -1.0)) == std::vector<std::size_t>{2, 1, 3, 4});
  ImportanceScores s;
  s.method = "shapg";
  s.char_fn = "sample-perf";
  s.seed = 12;
  s.feature_names = {"a", "b"};
  s.scores = Eigen::Vector2d(0.1, 1.0 / 3.0);
  s.eval_count = 8;
  s.contexts = 2;
  const ImportanceScores back = importance_from_json(to_json(s));
  CHECK(back.scores == s.scores);
  CHECK(back.feature_names == s.feature_names);
  CHECK(back.method == "shapg");
  CHECK(back.eval_count == 8);
}
