#include "gtselect/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtselect/attribution.hpp"
#include "gtselect/config.hpp"
#include "gtselect/dataset.hpp"
#include "gtselect/error.hpp"
#include "gtselect/pipeline.hpp"
#include "gtselect/rng.hpp"
#include "gtselect/sampler.hpp"

namespace gtselect {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Raised for inconsistent or missing options discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raw flag values; everything optional so that config-file values survive
// unless a flag is given.
struct Flags {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;

  std::optional<std::string> data;
  std::optional<std::string> target;
  std::optional<std::string> task;
  std::optional<std::string> method;
  std::optional<std::string> char_fn;
  std::optional<std::string> metric;
  std::optional<double> top_q;
  std::optional<double> threshold;
  std::optional<std::size_t> sample_size;
  std::optional<std::size_t> k;
  std::optional<std::size_t> l_threshold;
  std::optional<std::size_t> mc_perms;
  std::optional<std::size_t> gate;
  std::optional<std::size_t> threads;
  std::optional<std::string> preset;
  std::string scores;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "TOML config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seeds, "Seed (repeatable)")->take_all();
  cmd->add_option("--out", f.out, "Output file (stdout when absent)");
}

void add_data(CLI::App* cmd, Flags& f) {
  cmd->add_option("--data", f.data, "CSV data file");
  cmd->add_option("--target", f.target, "Target column name");
  cmd->add_option("--task", f.task, "Task kind")
      ->check(CLI::IsMember({"regression", "binclass", "multiclass"}));
}

void add_importance(CLI::App* cmd, Flags& f) {
  cmd->add_option("--method", f.method, "Attribution method")
      ->check(CLI::IsMember({"shapg", "pfi", "shapley", "cis"}));
  cmd->add_option("--char-fn", f.char_fn, "Characteristic function")
      ->check(CLI::IsMember({"output", "sample-perf", "global-perf"}));
  cmd->add_option("--metric", f.metric, "Evaluation metric");
  cmd->add_option("--l-threshold", f.l_threshold, "Exact/Monte Carlo switch for ShapG");
  cmd->add_option("--mc-perms", f.mc_perms, "Monte Carlo permutations");
  cmd->add_option("--threads", f.threads, "Attribution worker threads");
}

void add_selection(CLI::App* cmd, Flags& f) {
  auto* q = cmd->add_option("--top-q", f.top_q, "Keep the top fraction of features");
  auto* t = cmd->add_option("--threshold", f.threshold, "Keep scores strictly above tau");
  q->excludes(t);
}

void add_sampling(CLI::App* cmd, Flags& f) {
  cmd->add_option("--sample-size", f.sample_size, "Diversity sample size");
  cmd->add_option("--k", f.k, "Cluster count");
}

// Config file first, then flags on top.
PipelineConfig resolve(const Flags& f) {
  PipelineConfig cfg;
  if (f.preset) {
    if (*f.preset != "benchmark") throw UsageError("unknown preset '" + *f.preset + "'");
    cfg = PipelineConfig::benchmark_preset();
  }
  if (!f.config.empty()) cfg = load_config(f.config, std::move(cfg));
  if (f.data) cfg.data_path = *f.data;
  if (f.target) cfg.target = *f.target;
  if (f.task) cfg.task = parse_task(*f.task);
  if (f.method) cfg.importance.method = parse_attribution_method(*f.method);
  if (f.char_fn) cfg.importance.char_fn = parse_char_method(*f.char_fn);
  if (f.metric) cfg.importance.metric = parse_metric(*f.metric);
  if (f.l_threshold) cfg.importance.l_threshold = *f.l_threshold;
  if (f.mc_perms) cfg.importance.mc_perms = *f.mc_perms;
  if (f.threads) cfg.importance.threads = *f.threads;
  if (f.top_q) cfg.selection = SelectionRule::keep_top(*f.top_q);
  if (f.threshold) cfg.selection = SelectionRule::keep_above(*f.threshold);
  if (f.sample_size) cfg.sampling.sample_size = *f.sample_size;
  if (f.k) cfg.sampling.k = *f.k;
  if (f.gate) cfg.sampling.gate = *f.gate;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  apply_task_defaults(cfg);
  return cfg;
}

void require_data(const PipelineConfig& cfg) {
  if (cfg.data_path.empty()) throw UsageError("--data is required (flag or [data] path)");
  if (cfg.target.empty()) throw UsageError("--target is required (flag or [data] target)");
}

Dataset load(const PipelineConfig& cfg) {
  return load_csv(cfg.data_path, cfg.target, cfg.task, cfg.schema_hints);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text << '\n';
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  file << text << '\n';
  if (!file) throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
}

std::string cmd_sample(const Flags& f) {
  const PipelineConfig cfg = resolve(f);
  require_data(cfg);
  const Dataset data = load(cfg);
  const std::size_t s = cfg.sampling.sample_size.value_or(std::min(data.n(), kDefaultSampleCap));
  return to_json(diversity_sample(data, s, cfg.sampling.k, cfg.seeds.front()));
}

// Fits the initial model on every row and scores features on every row, or
// on a diversity sample when --sample-size is given.
std::string cmd_importance(const Flags& f) {
  const PipelineConfig cfg = resolve(f);
  require_data(cfg);
  validate(cfg);
  const Dataset data = load(cfg);
  const std::uint64_t seed = cfg.seeds.front();

  std::vector<std::size_t> rows;
  if (cfg.sampling.sample_size) {
    rows = diversity_sample(data, *cfg.sampling.sample_size, cfg.sampling.k,
                            derive_seed(seed, "sample")).indices;
  } else {
    rows.resize(data.n());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  FitOptions options;
  options.epochs_override = cfg.initial_epochs;
  const Model model = fit(PredictorSpec{cfg.initial_model, cfg.task, derive_seed(seed, "initial")},
                          rows.size() == data.n() ? data : data.subset(rows),
                          std::vector<bool>(data.m(), true), options);
  AttributionConfig imp = cfg.importance;
  imp.seed = derive_seed(seed, "importance");
  const ReferenceVector reference = compute_reference_vector(data, cfg.reference);
  return to_json(compute_importance(imp, model, data, rows, reference));
}

std::string cmd_select(const Flags& f) {
  if (f.scores.empty()) throw UsageError("--scores is required");
  const PipelineConfig cfg = resolve(f);
  return to_json(select_features(importance_from_json(read_file(f.scores)), cfg.selection));
}

std::string cmd_run(const Flags& f) {
  const PipelineConfig cfg = resolve(f);
  require_data(cfg);
  return run_pipeline(cfg).dump(2);
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Game-theoretic feature selection for tabular data", "gtselect"};
  app.require_subcommand(1);
  Flags flags;

  auto* sample = app.add_subcommand("sample", "Diversity-sample rows; writes sample indices JSON");
  add_common(sample, flags);
  add_data(sample, flags);
  add_sampling(sample, flags);

  auto* importance = app.add_subcommand("importance", "Score features; writes importance JSON");
  add_common(importance, flags);
  add_data(importance, flags);
  add_importance(importance, flags);
  add_sampling(importance, flags);

  auto* select = app.add_subcommand("select", "Apply a selection rule to importance JSON");
  add_common(select, flags);
  select->add_option("--scores", flags.scores, "Importance JSON from `importance`")
      ->check(CLI::ExistingFile);
  add_selection(select, flags);

  auto* run = app.add_subcommand("run", "Full pipeline; writes a run report JSON");
  add_common(run, flags);
  add_data(run, flags);
  add_importance(run, flags);
  add_selection(run, flags);
  add_sampling(run, flags);
  run->add_option("--gate", flags.gate, "Sample only when the train split exceeds this size");
  run->add_option("--preset", flags.preset, "Named settings applied before the config")
      ->check(CLI::IsMember({"benchmark"}));

  const auto usage = [&](const std::string& message, const CLI::App* cmd) {
    err << "gtselect: " << message << "\n\n" << (cmd ? cmd : &app)->help();
    return kExitUsage;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? &app : app.get_subcommands().front())->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    return usage(e.what(), subs.empty() ? nullptr : subs.front());
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    std::string text;
    if (chosen == sample) text = cmd_sample(flags);
    else if (chosen == importance) text = cmd_importance(flags);
    else if (chosen == select) text = cmd_select(flags);
    else text = cmd_run(flags);
    emit(text, flags.out, out);
    return kExitOk;
  } catch (const UsageError& e) {
    return usage(e.what(), chosen);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) return usage(e.what(), chosen);
    err << "gtselect: error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "gtselect: error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace gtselect
