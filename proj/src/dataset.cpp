#include "gtselect/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "gtselect/error.hpp"
#include "gtselect/rng.hpp"

namespace gtselect {

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kRegression: return "regression";
    case TaskKind::kBinclass: return "binclass";
    case TaskKind::kMulticlass: return "multiclass";
  }
  return "regression";
}

TaskKind parse_task(std::string_view text) {
  if (text == "regression") return TaskKind::kRegression;
  if (text == "binclass") return TaskKind::kBinclass;
  if (text == "multiclass") return TaskKind::kMulticlass;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown task '" + std::string(text) + "'");
}

std::string_view to_string(ReferenceStrategy s) {
  switch (s) {
    case ReferenceStrategy::kMean: return "mean";
    case ReferenceStrategy::kMedian: return "median";
    case ReferenceStrategy::kMode: return "mode";
  }
  return "mean";
}

ReferenceStrategy parse_reference_strategy(std::string_view text) {
  if (text == "mean") return ReferenceStrategy::kMean;
  if (text == "median") return ReferenceStrategy::kMedian;
  if (text == "mode") return ReferenceStrategy::kMode;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown reference strategy '" + std::string(text) + "'");
}

Dataset::Dataset(std::vector<FeatureColumn> columns, TargetColumn target,
                 TaskKind task)
    : columns_(std::move(columns)), target_(std::move(target)), task_(task) {
  if (columns_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset needs at least one feature");
  }
  const std::size_t rows = target_.values.size();
  for (const auto& c : columns_) {
    if (c.values.size() != rows) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "column '" + c.name + "' has " + std::to_string(c.values.size()) +
                      " entries, expected " + std::to_string(rows));
    }
    for (const double v : c.values) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "column '" + c.name + "' holds a non-finite value");
      }
      if (c.is_categorical() &&
          (v < 0 || v >= static_cast<double>(c.cardinality()) || v != std::floor(v))) {
        throw Error(ErrorCode::kInvalidArgument,
                    "column '" + c.name + "' holds an invalid category code");
      }
    }
  }
  if (task_ == TaskKind::kRegression) {
    target_.num_classes = 0;
  } else {
    if (task_ == TaskKind::kBinclass && target_.num_classes != 2) {
      throw Error(ErrorCode::kInvalidArgument, "binclass target needs 2 classes");
    }
    if (task_ == TaskKind::kMulticlass && target_.num_classes < 3) {
      throw Error(ErrorCode::kInvalidArgument,
                  "multiclass target needs at least 3 classes");
    }
    for (const double v : target_.values) {
      if (v < 0 || v >= static_cast<double>(target_.num_classes) || v != std::floor(v)) {
        throw Error(ErrorCode::kInvalidArgument, "target holds an invalid class code");
      }
    }
  }
}

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> names;
  names.reserve(columns_.size());
  for (const auto& c : columns_) names.push_back(c.name);
  return names;
}

Eigen::MatrixXd Dataset::features() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(m()));
  for (std::size_t j = 0; j < m(); ++j) {
    for (std::size_t i = 0; i < n(); ++i) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = columns_[j].values[i];
    }
  }
  return x;
}

Eigen::VectorXd Dataset::targets() const {
  return Eigen::Map<const Eigen::VectorXd>(target_.values.data(),
                                           static_cast<Eigen::Index>(n()));
}

Eigen::VectorXd Dataset::row(std::size_t i) const {
  Eigen::VectorXd r(static_cast<Eigen::Index>(m()));
  for (std::size_t j = 0; j < m(); ++j) r(static_cast<Eigen::Index>(j)) = columns_[j].values[i];
  return r;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<FeatureColumn> cols = columns_;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    cols[j].values.resize(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
      cols[j].values[k] = columns_[j].values.at(indices[k]);
    }
  }
  TargetColumn t = target_;
  t.values.resize(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) t.values[k] = target_.values.at(indices[k]);
  return Dataset(std::move(cols), std::move(t), task_);
}

namespace {

using Record = std::vector<std::string>;

// RFC-4180 reader: quoted fields, doubled quotes, CRLF or LF line endings,
// embedded newlines inside quotes.
std::vector<Record> read_records(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<Record> records;
  Record current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_record = [&] {
    current.push_back(std::move(field));
    field.clear();
    // A lone empty field means a blank line; skip it.
    if (!(current.size() == 1 && current[0].empty() && !field_started)) {
      records.push_back(std::move(current));
    }
    current.clear();
    field_started = false;
  };
  while (i < text.size()) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
      } else {
        field.push_back(c);
      }
      ++i;
      continue;
    }
    if (c == '"' && field.empty()) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      current.push_back(std::move(field));
      field.clear();
      field_started = true;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      end_record();
      ++i;
    } else if (c == '\n') {
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
    ++i;
  }
  if (field_started || !field.empty() || !current.empty()) end_record();
  return records;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::optional<double> parse_finite(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string quote_if_needed(const std::string& s) {
  const bool needs = s.find_first_of(",\"\r\n") != std::string::npos ||
                     (!s.empty() && (s.front() == ' ' || s.back() == ' '));
  if (!needs) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

TargetColumn build_target(const std::vector<Record>& rows, std::size_t col,
                          const std::string& name, TaskKind task) {
  TargetColumn t;
  t.name = name;
  t.values.reserve(rows.size() - 1);
  if (task == TaskKind::kRegression) {
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto v = parse_finite(rows[r][col]);
      if (!v) {
        throw CellError(ErrorCode::kUnparsableCell, r - 1, col,
                        "target cell at row " + std::to_string(r - 1) +
                            " is not a finite real");
      }
      t.values.push_back(*v);
    }
    return t;
  }

  // Integer codes are taken as-is when they already form a valid label set.
  bool integer_codes = true;
  double max_code = 0;
  for (std::size_t r = 1; r < rows.size() && integer_codes; ++r) {
    const auto v = parse_finite(rows[r][col]);
    if (!v || *v < 0 || *v != std::floor(*v)) {
      integer_codes = false;
    } else {
      max_code = std::max(max_code, *v);
    }
  }
  if (integer_codes && task == TaskKind::kBinclass && max_code > 1) integer_codes = false;
  if (integer_codes && task == TaskKind::kMulticlass && max_code < 2) integer_codes = false;

  if (integer_codes) {
    for (std::size_t r = 1; r < rows.size(); ++r) t.values.push_back(*parse_finite(rows[r][col]));
    t.num_classes = task == TaskKind::kBinclass ? 2 : static_cast<std::size_t>(max_code) + 1;
    return t;
  }

  std::unordered_map<std::string, std::size_t> codes;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cell = rows[r][col];
    auto [it, inserted] = codes.emplace(cell, t.labels.size());
    if (inserted) t.labels.push_back(cell);
    t.values.push_back(static_cast<double>(it->second));
  }
  if (task == TaskKind::kBinclass) {
    if (t.labels.size() > 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "binclass target '" + name + "' has " + std::to_string(t.labels.size()) +
                      " distinct labels");
    }
    t.num_classes = 2;
  } else {
    if (t.labels.size() < 3) {
      throw Error(ErrorCode::kInvalidArgument,
                  "multiclass target '" + name + "' needs at least 3 distinct labels");
    }
    t.num_classes = t.labels.size();
  }
  return t;
}

}  // namespace

Dataset parse_csv(std::string_view text, const std::string& target_name,
                  TaskKind task, const SchemaHints& schema_hints) {
  const auto rows = read_records(text);
  if (rows.empty()) throw Error(ErrorCode::kEmptyFile, "CSV has no header row");
  if (rows.size() < 2) throw Error(ErrorCode::kEmptyFile, "CSV has no data rows");

  const Record& header = rows[0];
  std::optional<std::size_t> target_col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == target_name) {
      if (target_col) {
        throw Error(ErrorCode::kTargetNotFound,
                    "target '" + target_name + "' matches more than one column");
      }
      target_col = c;
    }
  }
  if (!target_col) {
    throw Error(ErrorCode::kTargetNotFound, "target column '" + target_name + "' not found");
  }
  if (header.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "CSV has no feature columns");
  }

  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      throw CellError(ErrorCode::kUnparsableCell, r - 1, std::min(rows[r].size(), header.size()),
                      "row " + std::to_string(r - 1) + " has " + std::to_string(rows[r].size()) +
                          " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (is_blank(rows[r][c])) {
        throw CellError(ErrorCode::kMissingValue, r - 1, c,
                        "missing value at row " + std::to_string(r - 1) + ", column '" +
                            header[c] + "'");
      }
    }
  }

  std::vector<FeatureColumn> columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == *target_col) continue;
    FeatureColumn col;
    col.name = header[c];
    const auto hint = schema_hints.find(col.name);

    bool numeric = true;
    if (hint == schema_hints.end() || hint->second == ColumnKind::kNumeric) {
      col.values.reserve(rows.size() - 1);
      for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto v = parse_finite(rows[r][c]);
        if (!v) {
          if (hint != schema_hints.end()) {
            throw CellError(ErrorCode::kUnparsableCell, r - 1, c,
                            "cell at row " + std::to_string(r - 1) + ", column '" + col.name +
                                "' is not a finite real");
          }
          numeric = false;
          break;
        }
        col.values.push_back(*v);
      }
    } else {
      numeric = false;
    }

    if (!numeric) {
      col.kind = ColumnKind::kCategorical;
      col.values.clear();
      std::unordered_map<std::string, std::size_t> codes;
      for (std::size_t r = 1; r < rows.size(); ++r) {
        auto [it, inserted] = codes.emplace(rows[r][c], col.categories.size());
        if (inserted) col.categories.push_back(rows[r][c]);
        col.values.push_back(static_cast<double>(it->second));
      }
    }
    columns.push_back(std::move(col));
  }

  return Dataset(std::move(columns), build_target(rows, *target_col, target_name, task), task);
}

Dataset load_csv(const std::filesystem::path& path, const std::string& target_name,
                 TaskKind task, const SchemaHints& schema_hints) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), target_name, task, schema_hints);
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string to_csv(const Dataset& d) {
  std::string out;
  for (const auto& c : d.columns()) {
    out += quote_if_needed(c.name);
    out += ',';
  }
  out += quote_if_needed(d.target().name);
  out += '\n';
  for (std::size_t i = 0; i < d.n(); ++i) {
    for (const auto& c : d.columns()) {
      if (c.is_categorical()) {
        out += quote_if_needed(c.categories[static_cast<std::size_t>(c.values[i])]);
      } else {
        out += format_double(c.values[i]);
      }
      out += ',';
    }
    const auto& t = d.target();
    if (!t.labels.empty()) {
      out += quote_if_needed(t.labels[static_cast<std::size_t>(t.values[i])]);
    } else {
      out += format_double(t.values[i]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << to_csv(d);
}

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  // Sorted summation makes the mean independent of row order.
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return std::accumulate(sorted.begin(), sorted.end(), 0.0) /
         static_cast<double>(sorted.size());
}

double median_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  if (sorted.size() % 2 == 1) return sorted[mid];
  return 0.5 * (sorted[mid - 1] + sorted[mid]);
}

double mode_of(std::span<const double> codes) {
  std::map<double, std::size_t> counts;
  for (const double c : codes) ++counts[c];
  double best = 0.0;
  std::size_t best_count = 0;
  for (const auto& [code, count] : counts) {  // ascending code order
    if (count > best_count) {
      best = code;
      best_count = count;
    }
  }
  return best;
}

ReferenceVector compute_reference_vector(const Dataset& d,
                                         ReferenceStrategy numeric_strategy) {
  if (numeric_strategy == ReferenceStrategy::kMode) {
    throw Error(ErrorCode::kInvalidArgument,
                "numeric reference strategy must be mean or median");
  }
  ReferenceVector r;
  r.values.reserve(d.m());
  r.strategies.reserve(d.m());
  for (const auto& c : d.columns()) {
    if (c.is_categorical()) {
      r.values.push_back(mode_of(c.values));
      r.strategies.push_back(ReferenceStrategy::kMode);
    } else if (numeric_strategy == ReferenceStrategy::kMean) {
      r.values.push_back(mean_of(c.values));
      r.strategies.push_back(ReferenceStrategy::kMean);
    } else {
      r.values.push_back(median_of(c.values));
      r.strategies.push_back(ReferenceStrategy::kMedian);
    }
  }
  return r;
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  constexpr double kEps = 1e-9;
  if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) ||
      !(spec.val_fraction >= 0.0 && spec.val_fraction < 1.0) ||
      spec.train_fraction + spec.val_fraction > 1.0 + kEps) {
    throw Error(ErrorCode::kInvalidArgument, "invalid split fractions");
  }
  const double test_fraction = 1.0 - spec.train_fraction - spec.val_fraction;
  const auto count = [&](double fraction) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + kEps));
  };
  const std::size_t n_train = std::min(count(spec.train_fraction), n);
  const std::size_t n_val = std::min(count(spec.val_fraction), n - n_train);
  const std::size_t n_test = n - n_train - n_val;
  if (n_train == 0) {
    throw Error(ErrorCode::kFractionTooSmall, "train split would be empty");
  }
  if (spec.val_fraction > 0.0 && n_val == 0) {
    throw Error(ErrorCode::kFractionTooSmall, "validation split would be empty");
  }
  if (test_fraction > kEps && n_test == 0) {
    throw Error(ErrorCode::kFractionTooSmall, "test split would be empty");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed);
  rng.shuffle(std::span<std::size_t>(order));

  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return out;
}

Splits split(const Dataset& d, const SplitSpec& spec) {
  auto idx = split_indices(d.n(), spec);
  Dataset train = d.subset(idx.train);
  Dataset val = d.subset(idx.val);
  Dataset test = d.subset(idx.test);
  return Splits{std::move(train), std::move(val), std::move(test), std::move(idx)};
}

}  // namespace gtselect
