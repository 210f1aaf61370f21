#include "gtselect/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "gtselect/error.hpp"
#include "gtselect/rng.hpp"

namespace gtselect {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs `fn`, re-raising library errors with the pipeline step attached.
template <typename Fn>
auto step(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StepError&) {
    throw;
  } catch (const Error& e) {
    throw StepError(e.code(), name, e.what());
  } catch (const std::exception& e) {
    throw StepError(ErrorCode::kInvalidArgument, name, e.what());
  }
}

json model_to_json(const PredictorKind& kind) {
  json j;
  j["kind"] = kind_name(kind);
  if (const auto* p = std::get_if<RidgeParams>(&kind)) {
    j["lambda"] = p->lambda;
  } else if (const auto* p = std::get_if<LogisticParams>(&kind)) {
    j["lr"] = p->lr;
    j["epochs"] = p->epochs;
    j["batch"] = p->batch;
  } else if (const auto* p = std::get_if<MlpParams>(&kind)) {
    j["hidden_width"] = p->hidden_width;
    j["lr"] = p->lr;
    j["epochs"] = p->epochs;
    j["batch"] = p->batch;
  } else if (const auto* p = std::get_if<ExternalParams>(&kind)) {
    j["command"] = p->command;
    j["timeout"] = p->timeout_seconds;
  }
  return j;
}

json mean_std(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return json{{"mean", mean}, {"std", sd}};
}

json percent_delta(double selected, double baseline) {
  if (baseline == 0.0) return nullptr;
  return (selected - baseline) / baseline * 100.0;
}

}  // namespace

void validate(const SelectionRule& rule) {
  if (rule.threshold.has_value() == rule.top_q.has_value()) {
    throw Error(ErrorCode::kConfig, "exactly one of threshold and top_q must be set");
  }
  if (rule.top_q && !(*rule.top_q > 0.0 && *rule.top_q <= 1.0)) {
    throw Error(ErrorCode::kConfig, "top_q must lie in (0, 1]");
  }
  if (rule.threshold && !std::isfinite(*rule.threshold)) {
    throw Error(ErrorCode::kConfig, "threshold must be finite");
  }
}

std::size_t SelectionMask::count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::size_t top_q_count(double q, std::size_t m) {
  // Round half up; the epsilon absorbs products like 0.8 * 5 = 4.000...01.
  const auto rounded = static_cast<std::size_t>(std::floor(q * static_cast<double>(m) + 0.5 + 1e-9));
  return std::clamp<std::size_t>(rounded, 1, std::max<std::size_t>(m, 1));
}

SelectionMask select_features(const ImportanceScores& scores, const SelectionRule& rule) {
  validate(rule);
  const std::size_t m = scores.size();
  if (m == 0) throw Error(ErrorCode::kInvalidArgument, "no scores to select from");
  SelectionMask out;
  out.rule = rule;
  out.scores = scores.scores;
  out.mask.assign(m, false);
  if (rule.threshold) {
    for (std::size_t i = 0; i < m; ++i) {
      out.mask[i] = scores.scores(static_cast<Eigen::Index>(i)) > *rule.threshold;
    }
    if (out.count() == 0) {
      throw Error(ErrorCode::kEmptySelection,
                  "no feature scores above threshold " + std::to_string(*rule.threshold));
    }
  } else {
    const auto ranks = score_ranks(scores.scores);
    const std::size_t keep = top_q_count(*rule.top_q, m);
    for (std::size_t i = 0; i < m; ++i) out.mask[i] = ranks[i] <= keep;
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (out.mask[i]) {
      out.retained.push_back(i < scores.feature_names.size() ? scores.feature_names[i]
                                                             : "f" + std::to_string(i));
    }
  }
  return out;
}

std::string to_json(const SelectionMask& selection) {
  json j;
  if (selection.rule.threshold) {
    j["rule"] = "threshold";
    j["threshold"] = *selection.rule.threshold;
  } else {
    j["rule"] = "top_q";
    j["top_q"] = *selection.rule.top_q;
  }
  j["retained"] = selection.retained;
  j["mask"] = selection.mask;
  j["scores"] = std::vector<double>(selection.scores.data(),
                                    selection.scores.data() + selection.scores.size());
  return j.dump(2) + "\n";
}

PipelineConfig PipelineConfig::benchmark_preset() {
  PipelineConfig cfg;
  cfg.importance.method = AttributionMethod::kShapG;
  cfg.importance.char_fn = CharMethod::kSamplePerf;
  cfg.importance.l_threshold = 5;
  cfg.selection = SelectionRule::keep_top(0.8);
  cfg.seeds = {0, 1, 2};
  return cfg;
}

void apply_task_defaults(PipelineConfig& cfg) {
  const auto fix = [&](PredictorKind& kind) {
    if (cfg.task == TaskKind::kRegression && std::holds_alternative<LogisticParams>(kind)) {
      kind = RidgeParams{};
    } else if (cfg.task != TaskKind::kRegression && std::holds_alternative<RidgeParams>(kind)) {
      kind = LogisticParams{};
    }
  };
  fix(cfg.initial_model);
  fix(cfg.final_model);
}

void validate(const PipelineConfig& cfg) {
  if (cfg.seeds.empty()) throw Error(ErrorCode::kConfig, "at least one seed is required");
  validate(cfg.selection);
  if (cfg.sampling.sample_size && *cfg.sampling.sample_size < 1) {
    throw Error(ErrorCode::kConfig, "sample_size must be at least 1");
  }
  if (cfg.sampling.k && *cfg.sampling.k < 1) throw Error(ErrorCode::kConfig, "k must be at least 1");
  if (cfg.importance.l_threshold < 1) throw Error(ErrorCode::kConfig, "l_threshold must be >= 1");
  if (cfg.importance.mc_perms < 1) throw Error(ErrorCode::kConfig, "mc_perms must be >= 1");
  if (cfg.importance.pfi_repeats < 1) throw Error(ErrorCode::kConfig, "pfi_repeats must be >= 1");
  if (cfg.initial_epochs < 1) throw Error(ErrorCode::kConfig, "initial_epochs must be >= 1");
  if (cfg.importance.metric && !metric_fits_task(*cfg.importance.metric, cfg.task)) {
    throw Error(ErrorCode::kConfig, "metric does not fit the task");
  }
  validate(PredictorSpec{cfg.initial_model, cfg.task, 0});
  validate(PredictorSpec{cfg.final_model, cfg.task, 0});
}

json config_to_json(const PipelineConfig& cfg) {
  json j;
  j["data"] = {{"path", cfg.data_path.string()},
               {"target", cfg.target},
               {"task", to_string(cfg.task)},
               {"reference", to_string(cfg.reference)}};
  j["split"] = {{"train_fraction", cfg.train_fraction}, {"val_fraction", cfg.val_fraction}};
  j["initial_model"] = model_to_json(cfg.initial_model);
  j["final_model"] = model_to_json(cfg.final_model);
  j["training"] = {{"initial_epochs", cfg.initial_epochs}, {"patience", cfg.patience}};
  const auto& imp = cfg.importance;
  j["importance"] = {{"method", to_string(imp.method)},
                     {"char_fn", to_string(imp.char_fn)},
                     {"metric", to_string(imp.metric.value_or(default_metric(cfg.task)))},
                     {"l_threshold", imp.l_threshold},
                     {"mc_perms", imp.mc_perms},
                     {"max_exact_players", imp.max_exact_players},
                     {"pfi_repeats", imp.pfi_repeats}};
  json sel;
  if (cfg.selection.threshold) sel["threshold"] = *cfg.selection.threshold;
  if (cfg.selection.top_q) sel["top_q"] = *cfg.selection.top_q;
  j["selection"] = sel;
  json sampling;
  sampling["gate"] = cfg.sampling.gate;
  sampling["sample_size"] = cfg.sampling.sample_size ? json(*cfg.sampling.sample_size) : json(nullptr);
  sampling["k"] = cfg.sampling.k ? json(*cfg.sampling.k) : json(nullptr);
  sampling["final_on_sample"] = cfg.sampling.final_on_sample;
  j["sampling"] = sampling;
  j["seeds"] = cfg.seeds;
  return j;
}

json run_seed(const PipelineConfig& cfg, const Dataset& data, std::uint64_t seed) {
  json run;
  run["seed"] = seed;
  json timing;

  const Splits splits = step("1 (split)", [&] {
    return split(data, SplitSpec{cfg.train_fraction, cfg.val_fraction, derive_seed(seed, "split")});
  });
  const Dataset& train = splits.train;
  run["split"] = {{"train", train.n()}, {"val", splits.val.n()}, {"test", splits.test.n()}};

  // Diversity sampling decides the representative subset used both for the
  // initial model and for importance evaluation.
  const bool sampled = train.n() > cfg.sampling.gate;
  std::vector<std::size_t> rows;
  if (sampled) {
    const auto sample = step("3 (diversity sampling)", [&] {
      const std::size_t s = cfg.sampling.sample_size.value_or(std::min(train.n(), kDefaultSampleCap));
      return diversity_sample(train, s, cfg.sampling.k, derive_seed(seed, "sample"));
    });
    rows = sample.indices;
    run["sampling"] = "applied";
    run["sample"] = {{"s", sample.s}, {"k", sample.k}};
  } else {
    rows.resize(train.n());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    run["sampling"] = "skipped";
  }
  run["importance_rows"] = rows.size();

  const std::vector<bool> all_features(data.m(), true);
  auto start = Clock::now();
  const Model initial = step("2 (initial model training)", [&] {
    const Dataset subset = sampled ? train.subset(rows) : train;
    FitOptions options;
    options.epochs_override = cfg.initial_epochs;
    return fit(PredictorSpec{cfg.initial_model, cfg.task, derive_seed(seed, "initial")}, subset,
               all_features, options);
  });
  timing["initial_fit_seconds"] = seconds_since(start);

  start = Clock::now();
  const ImportanceScores scores = step("4 (feature importance)", [&] {
    const ReferenceVector reference = compute_reference_vector(train, cfg.reference);
    AttributionConfig imp = cfg.importance;
    imp.seed = derive_seed(seed, "importance");
    return compute_importance(imp, initial, train, rows, reference);
  });
  timing["importance_seconds"] = seconds_since(start);
  run["importance"] = json::parse(to_json(scores));

  const SelectionMask selection = step("5 (feature selection)", [&] {
    return select_features(scores, cfg.selection);
  });
  run["selection"] = json::parse(to_json(selection));
  run["selection"].erase("scores");

  const Dataset final_train =
      sampled && cfg.sampling.final_on_sample ? train.subset(rows) : train;
  FitOptions final_options;
  final_options.validation = splits.val.n() > 0 ? &splits.val : nullptr;
  final_options.patience = cfg.patience;
  const PredictorSpec final_spec{cfg.final_model, cfg.task, derive_seed(seed, "final")};

  start = Clock::now();
  const Model baseline = step("6 (baseline model training)", [&] {
    return fit(final_spec, final_train, all_features, final_options);
  });
  const double baseline_seconds = seconds_since(start);
  start = Clock::now();
  const Model selected = step("6 (final model training)", [&] {
    return fit(final_spec, final_train, selection.mask, final_options);
  });
  const double selected_seconds = seconds_since(start);
  timing["baseline_fit_seconds"] = baseline_seconds;
  timing["selected_fit_seconds"] = selected_seconds;
  timing["fit_time_delta_pct"] = percent_delta(selected_seconds, baseline_seconds);

  const Metric metric = cfg.importance.metric.value_or(default_metric(cfg.task));
  const Dataset* eval = splits.test.n() > 0 ? &splits.test
                        : splits.val.n() > 0 ? &splits.val
                                             : &train;
  const char* eval_name = splits.test.n() > 0 ? "test" : splits.val.n() > 0 ? "val" : "train";
  const auto [baseline_value, selected_value] = step("6 (evaluation)", [&] {
    const Eigen::MatrixXd x = eval->features();
    const Eigen::VectorXd y = eval->targets();
    return std::pair{compute_metric(metric, baseline.predict_full(x), y),
                     compute_metric(metric, selected.predict_full(x), y)};
  });

  run["evaluation"] = {{"metric", to_string(metric)}, {"split", eval_name}};
  run["baseline"] = {{"metric", baseline_value},
                     {"n_features", baseline.input_dim()},
                     {"epochs", baseline.epochs_run}};
  run["selected"] = {{"metric", selected_value},
                     {"n_features", selected.input_dim()},
                     {"epochs", selected.epochs_run}};
  run["metric_delta_pct"] = percent_delta(selected_value, baseline_value);
  run["timing"] = timing;
  return run;
}

json run_pipeline(const PipelineConfig& cfg, const Dataset& data) {
  validate(cfg);
  if (data.task() != cfg.task) throw Error(ErrorCode::kConfig, "dataset task differs from config");

  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  json report;
  report["schema"] = 1;
  report["config"] = config_to_json(cfg);
  report["dataset"] = {{"n", data.n()}, {"m", data.m()}, {"features", data.feature_names()}};
  json runs = json::array();
  std::vector<double> baseline, selected, delta, kept, base_time, sel_time;
  for (const auto seed : seeds) {
    json run = run_seed(cfg, data, seed);
    baseline.push_back(run["baseline"]["metric"].get<double>());
    selected.push_back(run["selected"]["metric"].get<double>());
    if (!run["metric_delta_pct"].is_null()) delta.push_back(run["metric_delta_pct"].get<double>());
    kept.push_back(run["selected"]["n_features"].get<double>());
    base_time.push_back(run["timing"]["baseline_fit_seconds"].get<double>());
    sel_time.push_back(run["timing"]["selected_fit_seconds"].get<double>());
    runs.push_back(std::move(run));
  }
  report["runs"] = std::move(runs);
  json aggregate;
  aggregate["baseline_metric"] = mean_std(baseline);
  aggregate["selected_metric"] = mean_std(selected);
  aggregate["metric_delta_pct"] = delta.empty() ? json(nullptr) : mean_std(delta);
  aggregate["n_selected"] = mean_std(kept);
  aggregate["timing"] = {{"baseline_fit_seconds", mean_std(base_time)},
                         {"selected_fit_seconds", mean_std(sel_time)}};
  report["aggregate"] = std::move(aggregate);
  return report;
}

json run_pipeline(const PipelineConfig& cfg) {
  if (cfg.data_path.empty()) throw Error(ErrorCode::kConfig, "data path is not set");
  if (cfg.target.empty()) throw Error(ErrorCode::kConfig, "target column is not set");
  validate(cfg);
  const Dataset data = step("0 (load data)", [&] {
    return load_csv(cfg.data_path, cfg.target, cfg.task, cfg.schema_hints);
  });
  return run_pipeline(cfg, data);
}

json strip_timing(json report) {
  if (report.is_object()) {
    report.erase("timing");
    for (auto& item : report.items()) item.value() = strip_timing(std::move(item.value()));
  } else if (report.is_array()) {
    for (auto& value : report) value = strip_timing(std::move(value));
  }
  return report;
}

}  // namespace gtselect
