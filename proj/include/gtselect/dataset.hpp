#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace gtselect {

enum class TaskKind { kRegression, kBinclass, kMulticlass };

std::string_view to_string(TaskKind task);
TaskKind parse_task(std::string_view text);

inline bool is_classification(TaskKind task) {
  return task != TaskKind::kRegression;
}

enum class ColumnKind { kNumeric, kCategorical };

struct FeatureColumn {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  // Category labels indexed by code; empty for numeric columns.
  std::vector<std::string> categories;
  std::vector<double> values;

  std::size_t cardinality() const { return categories.size(); }
  bool is_categorical() const { return kind == ColumnKind::kCategorical; }
};

struct TargetColumn {
  std::string name;
  std::vector<double> values;
  // Class labels indexed by code when the CSV carried string labels.
  std::vector<std::string> labels;
  std::size_t num_classes = 0;  // 0 for regression
};

// Immutable column-typed observation table. Categorical cells hold integer
// codes stored as doubles so every column feeds models as a single input.
class Dataset {
 public:
  Dataset(std::vector<FeatureColumn> columns, TargetColumn target,
          TaskKind task);

  std::size_t n() const { return target_.values.size(); }
  std::size_t m() const { return columns_.size(); }
  TaskKind task() const { return task_; }
  std::size_t num_classes() const { return target_.num_classes; }

  const std::vector<FeatureColumn>& columns() const { return columns_; }
  const FeatureColumn& column(std::size_t j) const { return columns_.at(j); }
  const TargetColumn& target() const { return target_; }
  std::vector<std::string> feature_names() const;

  double at(std::size_t row, std::size_t col) const {
    return columns_[col].values[row];
  }
  double y(std::size_t row) const { return target_.values[row]; }

  // n x M matrix of feature values.
  Eigen::MatrixXd features() const;
  Eigen::VectorXd targets() const;
  Eigen::VectorXd row(std::size_t i) const;

  // Rows in the given order; schema (names, categories, classes) preserved.
  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<FeatureColumn> columns_;
  TargetColumn target_;
  TaskKind task_;
};

using SchemaHints = std::map<std::string, ColumnKind>;

Dataset load_csv(const std::filesystem::path& path,
                 const std::string& target_name, TaskKind task,
                 const SchemaHints& schema_hints = {});

// Parses CSV text directly; `load_csv` reads the file and delegates here.
Dataset parse_csv(std::string_view text, const std::string& target_name,
                  TaskKind task, const SchemaHints& schema_hints = {});

std::string to_csv(const Dataset& d);
void write_csv(const Dataset& d, const std::filesystem::path& path);

// Shortest text that parses back to exactly the same double.
std::string format_double(double value);

enum class ReferenceStrategy { kMean, kMedian, kMode };

std::string_view to_string(ReferenceStrategy s);
ReferenceStrategy parse_reference_strategy(std::string_view text);

struct ReferenceVector {
  std::vector<double> values;
  std::vector<ReferenceStrategy> strategies;

  std::size_t size() const { return values.size(); }
};

double mean_of(std::span<const double> values);
double median_of(std::span<const double> values);
// Most frequent integer code; ties go to the smallest code.
double mode_of(std::span<const double> codes);

// Numeric features use `numeric_strategy` (mean or median); categorical
// features always use the mode.
ReferenceVector compute_reference_vector(
    const Dataset& d, ReferenceStrategy numeric_strategy);

struct SplitSpec {
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Seeded shuffle of 0..n-1 followed by contiguous slicing.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
  SplitIndices indices;
};

Splits split(const Dataset& d, const SplitSpec& spec);

}  // namespace gtselect
