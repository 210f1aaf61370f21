#include <doctest.h>

#include <fstream>
#include <sstream>

#include "gtselect/cli.hpp"
#include "gtselect/config.hpp"
#include "gtselect/error.hpp"
#include "gtselect/pipeline.hpp"
#include "support.hpp"

using namespace gtselect;
using nlohmann::json;

namespace {

ImportanceScores scores_of(std::vector<double> values) {
  ImportanceScores s;
  s.method = "shapg";
  s.char_fn = "sample-perf";
  for (std::size_t i = 0; i < values.size(); ++i) s.feature_names.push_back("f" + std::to_string(i));
  s.scores = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return s;
}

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.task = TaskKind::kRegression;
  cfg.importance.l_threshold = 5;
  cfg.importance.mc_perms = 20;
  cfg.selection = SelectionRule::keep_top(0.5);
  return cfg;
}

int run_cli(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  args.insert(args.begin(), "gtselect");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("selection examples") {
  const SelectionMask top = select_features(scores_of({0.5, 0.3, 0.1, 0.05, 0.02}), SelectionRule::keep_top(0.8));
  CHECK(top.count() == 4);
  CHECK(top.mask == std::vector<bool>{true, true, true, true, false});

  const SelectionMask tau = select_features(scores_of({1, 2, 3}), SelectionRule::keep_above(1.5));
  CHECK(tau.retained == std::vector<std::string>{"f1", "f2"});

  CHECK(select_features(scores_of({3, 1, 2}), SelectionRule::keep_top(1.0)).count() == 3);

  try {
    select_features(scores_of({1, 2, 3}), SelectionRule::keep_above(3.0));
    FAIL("expected EmptySelection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptySelection);
  }
}

TEST_CASE("top_q ties at the cut keep the lower index") {
  const SelectionMask m = select_features(scores_of({1, 5, 5, 5, 0}), SelectionRule::keep_top(0.4));
  CHECK(m.mask == std::vector<bool>{false, true, true, false, false});
}

TEST_CASE("property: top_q cardinality is max(1, round(q M))") {
  auto rng = testing::engine(1);
  for (std::size_t m = 1; m <= 50; ++m) {
    std::vector<double> values(m);
    for (auto& v : values) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    for (const double q : {0.2, 0.5, 0.8, 1.0}) {
      // Round half up, computed in exact integer arithmetic from q = k/10.
      const auto tenths = static_cast<std::size_t>(q * 10 + 0.5);
      const std::size_t expected = std::max<std::size_t>(1, (tenths * m + 5) / 10);
      CHECK(top_q_count(q, m) == expected);
      CHECK(select_features(scores_of(values), SelectionRule::keep_top(q)).count() == expected);
    }
  }
}

TEST_CASE("selection rule validation") {
  CHECK_THROWS_AS(validate(SelectionRule::keep_top(0.0)), Error);
  CHECK_THROWS_AS(validate(SelectionRule::keep_top(1.5)), Error);
  CHECK_THROWS_AS(validate(SelectionRule{}), Error);
  CHECK_NOTHROW(validate(SelectionRule::keep_above(-4.0)));
}

TEST_CASE("pipeline with q = 1 trains identical baseline and selected models") {
  const auto syn = testing::synthetic_recovery(300, 1);
  PipelineConfig cfg = small_config();
  cfg.selection = SelectionRule::keep_top(1.0);
  const json report = run_pipeline(cfg, syn.data);
  const auto& run = report["runs"][0];
  CHECK(run["baseline"]["metric"].get<double>() == run["selected"]["metric"].get<double>());
  CHECK(run["metric_delta_pct"].get<double>() == 0.0);
}

TEST_CASE("small datasets skip sampling; large ones sample") {
  const auto syn = testing::synthetic_recovery(100, 2);
  const json report = run_pipeline(small_config(), syn.data);
  CHECK(report["runs"][0]["sampling"] == "skipped");
  CHECK(report["runs"][0]["importance_rows"] == report["runs"][0]["split"]["train"]);

  PipelineConfig cfg = small_config();
  cfg.sampling.gate = 50;
  cfg.sampling.sample_size = 30;
  const json sampled = run_pipeline(cfg, syn.data);
  CHECK(sampled["runs"][0]["sampling"] == "applied");
  CHECK(sampled["runs"][0]["importance_rows"] == 30);
  CHECK(sampled["runs"][0]["sample"]["k"] == 5);
}

TEST_CASE("three seeds give three runs and aggregates") {
  const auto syn = testing::synthetic_recovery(200, 3);
  PipelineConfig cfg = small_config();
  cfg.seeds = {2, 0, 1};
  const json report = run_pipeline(cfg, syn.data);
  REQUIRE(report["runs"].size() == 3);
  CHECK(report["runs"][0]["seed"] == 0);
  CHECK(report["runs"][2]["seed"] == 2);
  std::vector<double> base;
  for (const auto& run : report["runs"]) base.push_back(run["baseline"]["metric"]);
  const double mean = (base[0] + base[1] + base[2]) / 3;
  CHECK(report["aggregate"]["baseline_metric"]["mean"].get<double>() == doctest::Approx(mean).epsilon(1e-14));
  double ss = 0;
  for (const double b : base) ss += (b - mean) * (b - mean);
  CHECK(report["aggregate"]["baseline_metric"]["std"].get<double>() ==
        doctest::Approx(std::sqrt(ss / 2)).epsilon(1e-12));
  CHECK(report["schema"] == 1);
}

TEST_CASE("report invariants: final model width and recomputable deltas") {
  const auto syn = testing::synthetic_recovery(300, 4);
  PipelineConfig cfg = small_config();
  cfg.seeds = {0, 1};
  const json report = run_pipeline(cfg, syn.data);
  for (const auto& run : report["runs"]) {
    CHECK(run["selected"]["n_features"] == run["selection"]["retained"].size());
    const double b = run["baseline"]["metric"], s = run["selected"]["metric"];
    CHECK(run["metric_delta_pct"].get<double>() == doctest::Approx(100.0 * (s - b) / b).epsilon(1e-12));
  }
}

TEST_CASE("pipeline determinism modulo timing") {
  const auto syn = testing::synthetic_recovery(250, 5);
  PipelineConfig cfg = small_config();
  cfg.initial_model = MlpParams{8, 0.05, 8, 32};
  cfg.final_model = MlpParams{8, 0.05, 8, 32};
  cfg.seeds = {0, 1};
  const json a = strip_timing(run_pipeline(cfg, syn.data));
  const json b = strip_timing(run_pipeline(cfg, syn.data));
  CHECK(a.dump() == b.dump());
  CHECK(a.dump().find("seconds") == std::string::npos);
}

TEST_CASE("pipeline failures name their step") {
  const auto syn = testing::synthetic_recovery(20, 6);
  PipelineConfig cfg = small_config();
  cfg.selection = SelectionRule::keep_above(1e9);
  try {
    run_pipeline(cfg, syn.data);
    FAIL("expected a step error");
  } catch (const StepError& e) {
    CHECK(std::string(e.what()).find("feature selection") != std::string::npos);
    CHECK(e.code() == ErrorCode::kEmptySelection);
  }
}

TEST_CASE("classification pipeline uses classification defaults") {
  const Eigen::MatrixXd x = testing::gaussian(200, 4, 3);
  std::vector<int> y(200);
  for (int i = 0; i < 200; ++i) y[i] = x(i, 1) > 0;
  const Dataset d = testing::make_classification(x, y, 2);
  PipelineConfig cfg = small_config();
  cfg.task = TaskKind::kBinclass;
  apply_task_defaults(cfg);
  CHECK(std::holds_alternative<LogisticParams>(cfg.final_model));
  const json report = run_pipeline(cfg, d);
  CHECK(report["runs"][0]["evaluation"]["metric"] == "accuracy");
  const auto& retained = report["runs"][0]["selection"]["retained"];
  CHECK(std::find(retained.begin(), retained.end(), "x1") != retained.end());
}

TEST_CASE("config parsing") {
  const PipelineConfig cfg = parse_config(R"(
# comment
[data]
path = "d.csv"   # trailing comment
target = "y"
task = "binclass"
categorical = ["color", "size"]

[split]
train_fraction = 0.6
val_fraction = 0.2

[final_model]
kind = "mlp"
hidden_width = 16
lr = 1e-2

[importance]
method = "pfi"
metric = "f1_macro"
pfi_repeats = 7

[selection]
threshold = 0.25

[sampling]
gate = 5_000
k = 12

[run]
seeds = [3, 1, 2,]
)");
  CHECK(cfg.data_path == "d.csv");
  CHECK(cfg.task == TaskKind::kBinclass);
  CHECK(cfg.schema_hints.at("color") == ColumnKind::kCategorical);
  CHECK(cfg.train_fraction == 0.6);
  REQUIRE(std::holds_alternative<MlpParams>(cfg.final_model));
  CHECK(std::get<MlpParams>(cfg.final_model).hidden_width == 16);
  CHECK(std::get<MlpParams>(cfg.final_model).lr == 0.01);
  CHECK(cfg.importance.method == AttributionMethod::kPfi);
  CHECK(cfg.importance.metric == Metric::kF1Macro);
  CHECK(cfg.importance.pfi_repeats == 7);
  CHECK(cfg.selection.threshold == 0.25);
  CHECK_FALSE(cfg.selection.top_q.has_value());
  CHECK(cfg.sampling.gate == 5000);
  CHECK(cfg.sampling.k == 12);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 1, 2});
}

TEST_CASE("config errors are hard") {
  const auto code = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;
  };
  CHECK(code("[data]\ntargt = \"y\"\n") == ErrorCode::kConfig);
  CHECK(code("[nope]\nx = 1\n") == ErrorCode::kConfig);
  CHECK(code("[nope]\n") == ErrorCode::kConfig);
  CHECK(code("top = 1\n") == ErrorCode::kConfig);
  CHECK(code("[initial_model]\nkind = \"ridge\"\nhidden_width = 3\n") == ErrorCode::kConfig);
  CHECK(code("[data]\ntask = \"ranking\"\n") == ErrorCode::kConfig);
  CHECK(code("[selection]\ntop_q = 0.5\nthreshold = 1\n") == ErrorCode::kConfig);
  CHECK(code("[split]\ntrain_fraction = \"x\"\n") == ErrorCode::kConfig);
  CHECK(code("[data]\npath = \"unterminated\n") == ErrorCode::kConfig);
  CHECK(code("[data]\npath = \"a\"\npath = \"b\"\n") == ErrorCode::kConfig);
}

TEST_CASE("benchmark preset") {
  const PipelineConfig p = parse_config("[run]\npreset = \"benchmark\"\n[importance]\nl_threshold = 7\n");
  CHECK(p.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(p.importance.l_threshold == 7);
  CHECK(p.selection.top_q == 0.8);
  CHECK(PipelineConfig::benchmark_preset().importance.l_threshold == 5);
}

TEST_CASE("cli usage errors exit 1 with a synopsis") {
  std::string out, err;
  CHECK(run_cli({"run", "--bogus"}, &out, &err) == 1);
  CHECK(err.find("Usage") != std::string::npos);
  CHECK(run_cli({}, &out, &err) == 1);
  CHECK(run_cli({"run", "--top-q", "0.5", "--threshold", "1"}, &out, &err) == 1);
  CHECK(run_cli({"run", "--target", "y"}, &out, &err) == 1);
  CHECK(run_cli({"--help"}, &out, &err) == 0);
  CHECK(out.find("importance") != std::string::npos);
}

TEST_CASE("cli subcommands write JSON artifacts") {
  const auto dir = testing::temp_dir("cli");
  const auto syn = testing::synthetic_recovery(150, 7);
  write_csv(syn.data, dir / "d.csv");
  const std::string data = (dir / "d.csv").string();

  std::string out, err;
  REQUIRE(run_cli({"importance", "--method", "shapg", "--char-fn", "sample-perf", "--data", data, "--target",
                   "y", "--task", "regression", "--out", (dir / "imp.json").string()},
                  &out, &err) == 0);
  const json imp = json::parse(slurp(dir / "imp.json"));
  CHECK(imp["method"] == "shapg");
  CHECK(imp["scores"].size() == 10);

  REQUIRE(run_cli({"select", "--scores", (dir / "imp.json").string(), "--top-q", "0.5"}, &out, &err) == 0);
  const json sel = json::parse(out);
  CHECK(sel["retained"].size() == 5);

  REQUIRE(run_cli({"sample", "--data", data, "--target", "y", "--sample-size", "20", "--seed", "4"}, &out, &err) ==
          0);
  const json sample = json::parse(out);
  CHECK(sample["indices"].size() == 20);
  CHECK(sample["seed"] == 4);

  std::ofstream(dir / "cfg.toml") << "[data]\npath = \"" << data
                                  << "\"\ntarget = \"y\"\n[selection]\ntop_q = 0.5\n[run]\nseeds = [0, 1]\n";
  REQUIRE(run_cli({"run", "--config", (dir / "cfg.toml").string(), "--out", (dir / "report.json").string()}, &out,
                  &err) == 0);
  const json report = json::parse(slurp(dir / "report.json"));
  CHECK(report["runs"].size() == 2);

  // Flags override the config file.
  REQUIRE(run_cli({"run", "--config", (dir / "cfg.toml").string(), "--seed", "5", "--top-q", "1.0"}, &out, &err) ==
          0);
  const json over = json::parse(out);
  CHECK(over["runs"].size() == 1);
  CHECK(over["runs"][0]["seed"] == 5);
  CHECK(over["runs"][0]["selected"]["n_features"] == 10);
}

TEST_CASE("cli runtime errors exit 2") {
  const auto dir = testing::temp_dir("cli_err");
  std::ofstream(dir / "bad.csv") << "a,y\n1,\n";
  std::string out, err;
  CHECK(run_cli({"run", "--data", (dir / "bad.csv").string(), "--target", "y"}, &out, &err) == 2);
  CHECK(err.find("MissingValue") != std::string::npos);
  CHECK(run_cli({"run", "--data", (dir / "missing.csv").string(), "--target", "y"}, &out, &err) == 2);
}
