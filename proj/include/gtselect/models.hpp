#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "gtselect/dataset.hpp"

namespace gtselect {

struct RidgeParams {
  double lambda = 1e-3;
};

struct LogisticParams {
  double lr = 0.1;
  std::size_t epochs = 8;
  std::size_t batch = 64;
};

struct MlpParams {
  std::size_t hidden_width = 32;
  double lr = 0.05;
  std::size_t epochs = 8;
  std::size_t batch = 64;
};

struct ExternalParams {
  std::vector<std::string> command;
  double timeout_seconds = 30.0;
};

using PredictorKind = std::variant<RidgeParams, LogisticParams, MlpParams, ExternalParams>;

struct PredictorSpec {
  PredictorKind kind = RidgeParams{};
  TaskKind task = TaskKind::kRegression;
  std::uint64_t seed = 0;
};

std::string_view kind_name(const PredictorKind& kind);
void validate(const PredictorSpec& spec);

struct Predictions {
  TaskKind task = TaskKind::kRegression;
  Eigen::VectorXd values;    // regression outputs
  Eigen::MatrixXd proba;     // classification: rows x K, rows sum to 1
  std::vector<int> labels;   // classification argmax

  std::size_t size() const {
    return static_cast<std::size_t>(task == TaskKind::kRegression ? values.size() : proba.rows());
  }
};

// Fills `labels` from `proba` (ties to the lowest class index).
void assign_argmax_labels(Predictions& p);

// A trained function over its own input width.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Predictions predict(const Eigen::MatrixXd& rows) const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual TaskKind task() const = 0;
};

class RidgePredictor final : public Predictor {
 public:
  RidgePredictor(Eigen::VectorXd coefficients, double intercept)
      : coefficients_(std::move(coefficients)), intercept_(intercept) {}

  Predictions predict(const Eigen::MatrixXd& rows) const override;
  std::size_t input_dim() const override { return static_cast<std::size_t>(coefficients_.size()); }
  TaskKind task() const override { return TaskKind::kRegression; }

  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  double intercept() const { return intercept_; }

 private:
  Eigen::VectorXd coefficients_;
  double intercept_;
};

// Fully connected network with an optional single ReLU hidden layer
// (hidden == 0 gives a generalized linear model). Output width is 1 for
// regression and binclass, K for multiclass. Parameters live in one flat
// vector: W1 (hidden x in), b1, W2 (out x hidden_or_in), b2, column-major.
class DenseNetwork {
 public:
  DenseNetwork(std::size_t inputs, std::size_t hidden, std::size_t outputs, TaskKind task);

  std::size_t inputs() const { return inputs_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t outputs() const { return outputs_; }
  TaskKind task() const { return task_; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  void init_uniform(std::uint64_t seed);

  // Raw outputs before the link function, rows x outputs.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  // Mean loss over the rows: half squared error (regression), binary
  // cross-entropy on the logit (binclass), softmax cross-entropy
  // (multiclass). `y` holds targets or class codes.
  double loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const;
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           Eigen::VectorXd& gradient) const;

  // Applies the output link: identity, sigmoid or softmax.
  Predictions link(const Eigen::MatrixXd& raw) const;

 private:
  std::size_t inputs_;
  std::size_t hidden_;
  std::size_t outputs_;
  TaskKind task_;
  Eigen::VectorXd params_;
};

// Network predictor with the input (and, for regression, target)
// standardization learned at fit time.
class NetworkPredictor final : public Predictor {
 public:
  NetworkPredictor(DenseNetwork network, Eigen::VectorXd input_mean, Eigen::VectorXd input_scale,
                   double target_mean = 0.0, double target_scale = 1.0);

  Predictions predict(const Eigen::MatrixXd& rows) const override;
  std::size_t input_dim() const override { return network_.inputs(); }
  TaskKind task() const override { return network_.task(); }

  const DenseNetwork& network() const { return network_; }

 private:
  DenseNetwork network_;
  Eigen::VectorXd input_mean_;
  Eigen::VectorXd input_scale_;
  double target_mean_;
  double target_scale_;
};

class ExternalPredictor;

// A fitted predictor bound to the subset of dataset columns it consumes.
class Model {
 public:
  Model(std::shared_ptr<const Predictor> predictor, std::vector<std::size_t> columns,
        std::size_t full_dim);

  // rows must have exactly input_dim() columns.
  Predictions predict(const Eigen::MatrixXd& rows) const;
  // rows carry all full_dim() dataset features; masked-out ones are dropped.
  Predictions predict_full(const Eigen::MatrixXd& rows) const;

  std::size_t input_dim() const { return columns_.size(); }
  std::size_t full_dim() const { return full_dim_; }
  const std::vector<std::size_t>& columns() const { return columns_; }
  TaskKind task() const { return predictor_->task(); }
  const Predictor& predictor() const { return *predictor_; }

  // Training loss after each epoch (entry 0 is the initial loss); empty for
  // closed-form and external models.
  std::vector<double> loss_history;
  std::size_t epochs_run = 0;

 private:
  std::shared_ptr<const Predictor> predictor_;
  std::vector<std::size_t> columns_;
  std::size_t full_dim_;
};

struct FitOptions {
  // Enables early stopping on validation loss when non-null and non-empty.
  const Dataset* validation = nullptr;
  std::size_t patience = 16;
  // Overrides the epoch budget of iterative kinds when non-zero.
  std::size_t epochs_override = 0;
};

Model fit(const PredictorSpec& spec, const Dataset& train, const std::vector<bool>& feature_mask,
          const FitOptions& options = {});

// Convenience constructors for fixed-parameter models over all columns.
Model ridge_model(Eigen::VectorXd coefficients, double intercept);
Model linear_classifier(Eigen::MatrixXd weights, Eigen::VectorXd bias, TaskKind task);

// Child-process model speaking newline-delimited JSON on stdin/stdout.
Model external_connect(const std::vector<std::string>& command, double timeout_seconds = 30.0);

class ExternalPredictor final : public Predictor {
 public:
  ExternalPredictor(const std::vector<std::string>& command, double timeout_seconds);
  ~ExternalPredictor() override;
  ExternalPredictor(const ExternalPredictor&) = delete;
  ExternalPredictor& operator=(const ExternalPredictor&) = delete;

  Predictions predict(const Eigen::MatrixXd& rows) const override;
  std::size_t input_dim() const override { return n_features_; }
  TaskKind task() const override { return task_; }

 private:
  std::string round_trip(const std::string& request) const;
  std::string read_line() const;

  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::chrono::milliseconds timeout_;
  TaskKind task_ = TaskKind::kRegression;
  std::size_t n_features_ = 0;
  mutable std::uint64_t next_id_ = 1;
  mutable std::string buffer_;
  mutable std::mutex mutex_;
};

}  // namespace gtselect
