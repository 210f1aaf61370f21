#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtselect/attribution.hpp"
#include "gtselect/dataset.hpp"
#include "gtselect/error.hpp"
#include "gtselect/models.hpp"
#include "gtselect/sampler.hpp"

namespace gtselect {

// Exactly one of threshold / top_q is set.
struct SelectionRule {
  std::optional<double> threshold;
  std::optional<double> top_q;

  static SelectionRule keep_above(double tau) { return {tau, std::nullopt}; }
  static SelectionRule keep_top(double q) { return {std::nullopt, q}; }
};

void validate(const SelectionRule& rule);

struct SelectionMask {
  std::vector<bool> mask;
  std::vector<std::string> retained;
  SelectionRule rule;
  Eigen::VectorXd scores;

  std::size_t count() const;
};

// max(1, round-half-up(q * M)).
std::size_t top_q_count(double q, std::size_t m);

// Threshold keeps scores strictly above tau; top_q keeps the highest
// top_q_count scores, lower index first on ties at the cut.
SelectionMask select_features(const ImportanceScores& scores, const SelectionRule& rule);

std::string to_json(const SelectionMask& selection);

struct SamplingConfig {
  std::size_t gate = 10000;                 // sample only when n_train > gate
  std::optional<std::size_t> sample_size;   // default min(n_train, 2048)
  std::optional<std::size_t> k;
  bool final_on_sample = false;
};

inline constexpr std::size_t kDefaultSampleCap = 2048;
inline constexpr std::size_t kInitialEpochs = 8;
inline constexpr std::size_t kDefaultPatience = 16;

struct PipelineConfig {
  std::filesystem::path data_path;
  std::string target;
  TaskKind task = TaskKind::kRegression;
  SchemaHints schema_hints;
  ReferenceStrategy reference = ReferenceStrategy::kMean;

  double train_fraction = 0.7;
  double val_fraction = 0.1;

  // task and seed are filled in per run.
  PredictorKind initial_model = RidgeParams{};
  PredictorKind final_model = RidgeParams{};
  std::size_t initial_epochs = kInitialEpochs;
  std::size_t patience = kDefaultPatience;

  AttributionConfig importance;
  SelectionRule selection = SelectionRule::keep_top(0.8);
  SamplingConfig sampling;
  std::vector<std::uint64_t> seeds{0};

  // Settings used for the reported experiments: ShapG on sample-level
  // performance, top 80%, l = 5, seeds 0..2.
  static PipelineConfig benchmark_preset();
};

// Replaces model kinds that cannot serve the task (ridge for classification,
// logistic for regression) with the task's default.
void apply_task_defaults(PipelineConfig& cfg);
// Checks the settings; the data location is checked when it is loaded.
void validate(const PipelineConfig& cfg);

nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);

struct StepError : Error {
  StepError(ErrorCode code, const std::string& step, const std::string& message)
      : Error(code, "step " + step + ": " + message) {}
};

// Full pipeline for one seed on a loaded dataset. Returns the per-seed block
// of the report.
nlohmann::ordered_json run_seed(const PipelineConfig& cfg, const Dataset& data, std::uint64_t seed);

// Runs every configured seed and aggregates mean and std across them.
nlohmann::ordered_json run_pipeline(const PipelineConfig& cfg);
nlohmann::ordered_json run_pipeline(const PipelineConfig& cfg, const Dataset& data);

// Report with all wall-clock fields ("timing" objects) removed.
nlohmann::ordered_json strip_timing(nlohmann::ordered_json report);

}  // namespace gtselect
