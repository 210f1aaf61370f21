#include "gtselect/game.hpp"

#include <bit>
#include <cmath>

#include "gtselect/error.hpp"

namespace gtselect {

Coalition::Coalition(std::size_t num_players)
    : num_players_(num_players), words_((num_players + 63) / 64, 0) {}

Coalition::Coalition(std::size_t num_players, std::initializer_list<std::size_t> members)
    : Coalition(num_players, std::span<const std::size_t>(members.begin(), members.size())) {}

Coalition::Coalition(std::size_t num_players, std::span<const std::size_t> members)
    : Coalition(num_players) {
  for (const auto p : members) {
    if (p >= num_players) {
      throw Error(ErrorCode::kInvalidArgument,
                  "player " + std::to_string(p) + " outside 0.." + std::to_string(num_players));
    }
    insert(p);
  }
}

Coalition Coalition::full(std::size_t num_players) {
  Coalition c(num_players);
  for (std::size_t i = 0; i < num_players; ++i) c.insert(i);
  return c;
}

std::size_t Coalition::size() const {
  std::size_t total = 0;
  for (const auto w : words_) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

std::vector<std::size_t> Coalition::members() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < num_players_; ++i) {
    if (contains(i)) out.push_back(i);
  }
  return out;
}

std::size_t Coalition::hash() const {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ num_players_;
  for (const auto w : words_) {
    h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

Eigen::VectorXd build_hybrid_input(std::span<const double> x, const Coalition& s,
                                   const ReferenceVector& r) {
  if (x.size() != r.size() || s.num_players() != x.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "hybrid input dimensions disagree");
  }
  Eigen::VectorXd z(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    z(static_cast<Eigen::Index>(i)) = s.contains(i) ? x[i] : r.values[i];
  }
  return z;
}

Eigen::VectorXd build_hybrid_input(const Eigen::VectorXd& x, const Coalition& s,
                                   const ReferenceVector& r) {
  return build_hybrid_input(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                            s, r);
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::kR2: return "r2";
    case Metric::kNegMae: return "neg_mae";
    case Metric::kNegRmse: return "neg_rmse";
    case Metric::kAccuracy: return "accuracy";
    case Metric::kF1Macro: return "f1_macro";
  }
  return "r2";
}

Metric parse_metric(std::string_view text) {
  if (text == "r2") return Metric::kR2;
  if (text == "neg_mae") return Metric::kNegMae;
  if (text == "neg_rmse") return Metric::kNegRmse;
  if (text == "accuracy") return Metric::kAccuracy;
  if (text == "f1_macro" || text == "f1") return Metric::kF1Macro;
  throw Error(ErrorCode::kInvalidArgument, "unknown metric '" + std::string(text) + "'");
}

Metric default_metric(TaskKind task) {
  return task == TaskKind::kRegression ? Metric::kR2 : Metric::kAccuracy;
}

bool metric_fits_task(Metric metric, TaskKind task) {
  const bool regression_metric =
      metric == Metric::kR2 || metric == Metric::kNegMae || metric == Metric::kNegRmse;
  return regression_metric == (task == TaskKind::kRegression);
}

double compute_metric(Metric metric, const Predictions& p, const Eigen::VectorXd& y) {
  if (!metric_fits_task(metric, p.task)) {
    throw Error(ErrorCode::kInvalidArgument,
                "metric " + std::string(to_string(metric)) + " does not fit task " +
                    std::string(to_string(p.task)));
  }
  const auto n = static_cast<std::size_t>(y.size());
  if (n == 0 || p.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "metric needs one prediction per target");
  }
  switch (metric) {
    case Metric::kR2: {
      const double mean = y.mean();
      double ss_tot = 0.0;
      double ss_res = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        ss_tot += (y(k) - mean) * (y(k) - mean);
        ss_res += (y(k) - p.values(k)) * (y(k) - p.values(k));
      }
      if (ss_tot == 0.0) {
        throw Error(ErrorCode::kUndefinedMetric, "r2 is undefined on a constant target");
      }
      return 1.0 - ss_res / ss_tot;
    }
    case Metric::kNegMae:
      return -(p.values - y).cwiseAbs().mean();
    case Metric::kNegRmse:
      return -std::sqrt((p.values - y).squaredNorm() / static_cast<double>(n));
    case Metric::kAccuracy: {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        hits += static_cast<double>(p.labels[i]) == y(static_cast<Eigen::Index>(i));
      }
      return static_cast<double>(hits) / static_cast<double>(n);
    }
    case Metric::kF1Macro: {
      const auto classes = static_cast<std::size_t>(p.proba.cols());
      std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto truth = static_cast<std::size_t>(y(static_cast<Eigen::Index>(i)));
        const auto pred = static_cast<std::size_t>(p.labels[i]);
        if (truth >= classes) {
          throw Error(ErrorCode::kDimensionMismatch, "target class outside prediction width");
        }
        if (truth == pred) {
          ++tp[truth];
        } else {
          ++fp[pred];
          ++fn[truth];
        }
      }
      double sum = 0.0;
      std::size_t counted = 0;
      for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
        if (denom == 0) continue;  // class absent from both truth and predictions
        sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
        ++counted;
      }
      return sum / static_cast<double>(counted);
    }
  }
  return 0.0;
}

std::string_view to_string(CharMethod method) {
  switch (method) {
    case CharMethod::kModelOutput: return "output";
    case CharMethod::kSamplePerf: return "sample-perf";
    case CharMethod::kGlobalPerf: return "global-perf";
  }
  return "output";
}

CharMethod parse_char_method(std::string_view text) {
  if (text == "output" || text == "model_output" || text == "model-output") {
    return CharMethod::kModelOutput;
  }
  if (text == "sample-perf" || text == "sample_perf") return CharMethod::kSamplePerf;
  if (text == "global-perf" || text == "global_perf") return CharMethod::kGlobalPerf;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown characteristic function '" + std::string(text) + "'");
}

CharacteristicFunction::CharacteristicFunction(std::size_t num_players, Evaluator evaluator)
    : num_players_(num_players), evaluator_(std::move(evaluator)) {}

double CharacteristicFunction::operator()(const Coalition& s) {
  if (s.num_players() != num_players_) {
    throw Error(ErrorCode::kDimensionMismatch, "coalition player count does not match the game");
  }
  ++requests_;
  if (const auto it = cache_.find(s); it != cache_.end()) return it->second;
  const double value = evaluator_(s);
  cache_.emplace(s, value);
  return value;
}

namespace {

Predictions predict_one(const Model& model, const Eigen::VectorXd& z) {
  return model.predict_full(z.transpose());
}

void check_reference(const Model& model, const ReferenceVector& reference,
                     const Eigen::VectorXd& x) {
  if (reference.size() != model.full_dim() || static_cast<std::size_t>(x.size()) != model.full_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "observation, reference and model feature counts disagree");
  }
}

}  // namespace

CharacteristicFunction model_output_game(const Model& model, const ReferenceVector& reference,
                                         Eigen::VectorXd x) {
  check_reference(model, reference, x);
  const std::size_t m = model.full_dim();
  switch (model.task()) {
    case TaskKind::kRegression:
      return CharacteristicFunction(m, [model, reference, x](const Coalition& s) {
        return predict_one(model, build_hybrid_input(x, s, reference)).values(0);
      });
    case TaskKind::kBinclass:
      return CharacteristicFunction(m, [model, reference, x](const Coalition& s) {
        return predict_one(model, build_hybrid_input(x, s, reference)).proba(0, 1);
      });
    case TaskKind::kMulticlass: {
      const int committed = predict_one(model, x).labels[0];
      return CharacteristicFunction(m, [model, reference, x, committed](const Coalition& s) {
        return predict_one(model, build_hybrid_input(x, s, reference)).proba(0, committed);
      });
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown task");
}

CharacteristicFunction sample_perf_game(const Model& model, const ReferenceVector& reference,
                                        Eigen::VectorXd x, double y) {
  check_reference(model, reference, x);
  const std::size_t m = model.full_dim();
  if (model.task() == TaskKind::kRegression) {
    return CharacteristicFunction(m, [model, reference, x, y](const Coalition& s) {
      const double e = predict_one(model, build_hybrid_input(x, s, reference)).values(0) - y;
      return -(e * e);
    });
  }
  return CharacteristicFunction(m, [model, reference, x, y](const Coalition& s) {
    const int label = predict_one(model, build_hybrid_input(x, s, reference)).labels[0];
    return static_cast<double>(label) == y ? 1.0 : -1.0;
  });
}

CharacteristicFunction global_perf_game(const Model& model, const ReferenceVector& reference,
                                        const Dataset& eval, Metric metric) {
  if (eval.m() != model.full_dim() || reference.size() != eval.m()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "evaluation set, reference and model feature counts disagree");
  }
  if (eval.n() == 0) throw Error(ErrorCode::kInvalidArgument, "evaluation set is empty");
  if (!metric_fits_task(metric, eval.task())) {
    throw Error(ErrorCode::kInvalidArgument, "metric does not fit the evaluation task");
  }
  return CharacteristicFunction(
      eval.m(), [model, reference, metric, x = eval.features(), y = eval.targets()](
                    const Coalition& s) {
        Eigen::MatrixXd z = x;
        for (std::size_t j = 0; j < reference.size(); ++j) {
          if (!s.contains(j)) z.col(static_cast<Eigen::Index>(j)).setConstant(reference.values[j]);
        }
        return compute_metric(metric, model.predict_full(z), y);
      });
}

CharacteristicFunction sample_game(CharMethod method, const Model& model,
                                   const ReferenceVector& reference, const Dataset& data,
                                   std::size_t row) {
  switch (method) {
    case CharMethod::kModelOutput:
      return model_output_game(model, reference, data.row(row));
    case CharMethod::kSamplePerf:
      return sample_perf_game(model, reference, data.row(row), data.y(row));
    case CharMethod::kGlobalPerf:
      break;
  }
  throw Error(ErrorCode::kInvalidArgument, "global-perf is not a sample-level method");
}

Eigen::VectorXd aggregate_sample_scores(const Eigen::MatrixXd& per_sample, CharMethod method) {
  if (per_sample.rows() < 1) {
    throw Error(ErrorCode::kInvalidArgument, "aggregation needs at least one sample");
  }
  if (method == CharMethod::kGlobalPerf) {
    throw Error(ErrorCode::kInvalidArgument, "global-perf scores are not aggregated");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(per_sample.cols());
  for (Eigen::Index r = 0; r < per_sample.rows(); ++r) {
    for (Eigen::Index c = 0; c < per_sample.cols(); ++c) {
      out(c) += method == CharMethod::kModelOutput ? std::abs(per_sample(r, c)) : per_sample(r, c);
    }
  }
  return out / static_cast<double>(per_sample.rows());
}

}  // namespace gtselect
