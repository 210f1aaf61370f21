#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gtselect/dataset.hpp"
#include "gtselect/models.hpp"

namespace gtselect {

// Subset of the feature players 0..M-1, stored as a bitmask.
class Coalition {
 public:
  Coalition() = default;
  explicit Coalition(std::size_t num_players);
  Coalition(std::size_t num_players, std::initializer_list<std::size_t> members);
  Coalition(std::size_t num_players, std::span<const std::size_t> members);

  static Coalition full(std::size_t num_players);

  std::size_t num_players() const { return num_players_; }
  bool contains(std::size_t player) const {
    return (words_[player / 64] >> (player % 64)) & 1U;
  }
  void insert(std::size_t player) { words_[player / 64] |= std::uint64_t{1} << (player % 64); }
  void erase(std::size_t player) { words_[player / 64] &= ~(std::uint64_t{1} << (player % 64)); }
  Coalition with(std::size_t player) const {
    Coalition c = *this;
    c.insert(player);
    return c;
  }
  std::size_t size() const;
  std::vector<std::size_t> members() const;

  bool operator==(const Coalition& other) const = default;

  std::size_t hash() const;

 private:
  std::size_t num_players_ = 0;
  std::vector<std::uint64_t> words_;
};

struct CoalitionHash {
  std::size_t operator()(const Coalition& c) const { return c.hash(); }
};

// z_i = x_i for i in S, r_i otherwise.
Eigen::VectorXd build_hybrid_input(std::span<const double> x, const Coalition& s,
                                   const ReferenceVector& r);
Eigen::VectorXd build_hybrid_input(const Eigen::VectorXd& x, const Coalition& s,
                                   const ReferenceVector& r);

enum class Metric { kR2, kNegMae, kNegRmse, kAccuracy, kF1Macro };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view text);
Metric default_metric(TaskKind task);
bool metric_fits_task(Metric metric, TaskKind task);

// Higher is better for every metric.
double compute_metric(Metric metric, const Predictions& predictions, const Eigen::VectorXd& y);

enum class CharMethod { kModelOutput, kSamplePerf, kGlobalPerf };

std::string_view to_string(CharMethod method);
CharMethod parse_char_method(std::string_view text);

// Memoizing coalition evaluator. eval_count() is the number of distinct
// coalitions ever evaluated; repeats are served from the cache.
class CharacteristicFunction {
 public:
  using Evaluator = std::function<double(const Coalition&)>;

  CharacteristicFunction(std::size_t num_players, Evaluator evaluator);

  double operator()(const Coalition& s);

  std::size_t num_players() const { return num_players_; }
  std::size_t eval_count() const { return cache_.size(); }
  std::size_t request_count() const { return requests_; }

 private:
  std::size_t num_players_;
  Evaluator evaluator_;
  std::unordered_map<Coalition, double, CoalitionHash> cache_;
  std::size_t requests_ = 0;
};

// v(S) = f(z^(S)): regression output, positive-class probability (binclass),
// or the probability of the class predicted on the full input (multiclass).
CharacteristicFunction model_output_game(const Model& model, const ReferenceVector& reference,
                                         Eigen::VectorXd x);

// v(S) = -(f(z^(S)) - y)^2 for regression, +1/-1 for a correct/incorrect
// predicted label in classification.
CharacteristicFunction sample_perf_game(const Model& model, const ReferenceVector& reference,
                                        Eigen::VectorXd x, double y);

// v(S) = metric of the model over `eval`, every row hybridized with the
// same coalition.
CharacteristicFunction global_perf_game(const Model& model, const ReferenceVector& reference,
                                        const Dataset& eval, Metric metric);

// Per-observation game for the sample-level methods.
CharacteristicFunction sample_game(CharMethod method, const Model& model,
                                   const ReferenceVector& reference, const Dataset& data,
                                   std::size_t row);

// Column means of |scores| for model output, plain column means for
// sample performance. Rows are summed in ascending order.
Eigen::VectorXd aggregate_sample_scores(const Eigen::MatrixXd& per_sample, CharMethod method);

}  // namespace gtselect
