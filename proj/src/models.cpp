#include "gtselect/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gtselect/error.hpp"
#include "gtselect/rng.hpp"

namespace gtselect {

namespace {

using Index = Eigen::Index;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& rows, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(rows.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out.col(static_cast<Index>(c)) = rows.col(static_cast<Index>(cols[c]));
  }
  return out;
}

void check_width(const Eigen::MatrixXd& rows, std::size_t expected) {
  if (static_cast<std::size_t>(rows.cols()) != expected) {
    throw Error(ErrorCode::kDimensionMismatch,
                "rows have " + std::to_string(rows.cols()) + " columns, model expects " +
                    std::to_string(expected));
  }
}

}  // namespace

std::string_view kind_name(const PredictorKind& kind) {
  return std::visit(Overloaded{
                        [](const RidgeParams&) { return std::string_view("ridge"); },
                        [](const LogisticParams&) { return std::string_view("logistic"); },
                        [](const MlpParams&) { return std::string_view("mlp"); },
                        [](const ExternalParams&) { return std::string_view("external"); },
                    },
                    kind);
}

void validate(const PredictorSpec& spec) {
  const auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "invalid predictor spec: " + what);
  };
  std::visit(Overloaded{
                 [&](const RidgeParams& p) {
                   if (!(p.lambda >= 0.0)) fail("lambda must be >= 0");
                   if (spec.task != TaskKind::kRegression) fail("ridge supports regression only");
                 },
                 [&](const LogisticParams& p) {
                   if (!(p.lr > 0.0)) fail("lr must be > 0");
                   if (p.epochs < 1) fail("epochs must be >= 1");
                   if (p.batch < 1) fail("batch must be >= 1");
                   if (spec.task == TaskKind::kRegression) fail("logistic needs a classification task");
                 },
                 [&](const MlpParams& p) {
                   if (!(p.lr > 0.0)) fail("lr must be > 0");
                   if (p.epochs < 1) fail("epochs must be >= 1");
                   if (p.batch < 1) fail("batch must be >= 1");
                   if (p.hidden_width < 1) fail("hidden_width must be >= 1");
                 },
                 [&](const ExternalParams& p) {
                   if (p.command.empty()) fail("external command is empty");
                   if (!(p.timeout_seconds > 0.0)) fail("timeout must be > 0");
                 },
             },
             spec.kind);
}

void assign_argmax_labels(Predictions& p) {
  p.labels.assign(static_cast<std::size_t>(p.proba.rows()), 0);
  for (Index i = 0; i < p.proba.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < p.proba.cols(); ++c) {
      if (p.proba(i, c) > p.proba(i, best)) best = c;
    }
    p.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
}

Predictions RidgePredictor::predict(const Eigen::MatrixXd& rows) const {
  check_width(rows, input_dim());
  Predictions p;
  p.task = TaskKind::kRegression;
  p.values = (rows * coefficients_).array() + intercept_;
  return p;
}

// ---------------------------------------------------------------------------
// DenseNetwork

DenseNetwork::DenseNetwork(std::size_t inputs, std::size_t hidden, std::size_t outputs,
                           TaskKind task)
    : inputs_(inputs), hidden_(hidden), outputs_(outputs), task_(task) {
  const std::size_t feed = hidden_ > 0 ? hidden_ : inputs_;
  const std::size_t first = hidden_ > 0 ? hidden_ * inputs_ + hidden_ : 0;
  params_ = Eigen::VectorXd::Zero(static_cast<Index>(first + outputs_ * feed + outputs_));
}

void DenseNetwork::init_uniform(std::uint64_t seed) {
  Rng rng(seed);
  Index offset = 0;
  const auto fill = [&](std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (std::size_t i = 0; i < count; ++i) params_(offset++) = rng.uniform(-bound, bound);
  };
  if (hidden_ > 0) {
    fill(hidden_ * inputs_, inputs_);
    fill(hidden_, inputs_);
    fill(outputs_ * hidden_, hidden_);
    fill(outputs_, hidden_);
  } else {
    fill(outputs_ * inputs_, inputs_);
    fill(outputs_, inputs_);
  }
}

namespace {

struct Layers {
  Eigen::Map<const Eigen::MatrixXd> w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::MatrixXd> w2;
  Eigen::Map<const Eigen::VectorXd> b2;
};

Layers unpack(const Eigen::VectorXd& p, std::size_t in, std::size_t hidden, std::size_t out) {
  const auto i = static_cast<Index>(in);
  const auto h = static_cast<Index>(hidden);
  const auto o = static_cast<Index>(out);
  const Index feed = hidden > 0 ? h : i;
  const Index first = hidden > 0 ? h * i + h : 0;
  const double* base = p.data();
  return Layers{
      Eigen::Map<const Eigen::MatrixXd>(base, h, hidden > 0 ? i : 0),
      Eigen::Map<const Eigen::VectorXd>(base + h * i, h),
      Eigen::Map<const Eigen::MatrixXd>(base + first, o, feed),
      Eigen::Map<const Eigen::VectorXd>(base + first + o * feed, o),
  };
}

}  // namespace

Eigen::MatrixXd DenseNetwork::forward(const Eigen::MatrixXd& x) const {
  const auto l = unpack(params_, inputs_, hidden_, outputs_);
  if (hidden_ == 0) {
    return (x * l.w2.transpose()).rowwise() + l.b2.transpose();
  }
  const Eigen::MatrixXd a =
      ((x * l.w1.transpose()).rowwise() + l.b1.transpose()).cwiseMax(0.0);
  return (a * l.w2.transpose()).rowwise() + l.b2.transpose();
}

namespace {

// Mean loss and d(loss)/d(raw output) for the task's output head.
double head_loss(TaskKind task, const Eigen::MatrixXd& raw, const Eigen::VectorXd& y,
                 Eigen::MatrixXd* d_raw) {
  const Index rows = raw.rows();
  const double inv = 1.0 / static_cast<double>(std::max<Index>(rows, 1));
  double total = 0.0;
  if (d_raw) d_raw->resize(raw.rows(), raw.cols());
  for (Index r = 0; r < rows; ++r) {
    switch (task) {
      case TaskKind::kRegression: {
        const double e = raw(r, 0) - y(r);
        total += 0.5 * e * e;
        if (d_raw) (*d_raw)(r, 0) = e * inv;
        break;
      }
      case TaskKind::kBinclass: {
        const double z = raw(r, 0);
        total += softplus(z) - y(r) * z;
        if (d_raw) (*d_raw)(r, 0) = (sigmoid(z) - y(r)) * inv;
        break;
      }
      case TaskKind::kMulticlass: {
        const double mx = raw.row(r).maxCoeff();
        const Eigen::RowVectorXd e = (raw.row(r).array() - mx).exp();
        const double sum = e.sum();
        const auto label = static_cast<Index>(y(r));
        total += std::log(sum) + mx - raw(r, label);
        if (d_raw) {
          d_raw->row(r) = e / sum * inv;
          (*d_raw)(r, label) -= inv;
        }
        break;
      }
    }
  }
  return total * inv;
}

}  // namespace

double DenseNetwork::loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const {
  return head_loss(task_, forward(x), y, nullptr);
}

double DenseNetwork::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       Eigen::VectorXd& gradient) const {
  const auto l = unpack(params_, inputs_, hidden_, outputs_);
  gradient.setZero(params_.size());
  const auto i = static_cast<Index>(inputs_);
  const auto h = static_cast<Index>(hidden_);
  const auto o = static_cast<Index>(outputs_);
  Eigen::MatrixXd d_raw;

  if (hidden_ == 0) {
    const Eigen::MatrixXd raw = (x * l.w2.transpose()).rowwise() + l.b2.transpose();
    const double value = head_loss(task_, raw, y, &d_raw);
    Eigen::Map<Eigen::MatrixXd>(gradient.data(), o, i) = d_raw.transpose() * x;
    gradient.segment(o * i, o) = d_raw.colwise().sum().transpose();
    return value;
  }

  const Eigen::MatrixXd pre = (x * l.w1.transpose()).rowwise() + l.b1.transpose();
  const Eigen::MatrixXd act = pre.cwiseMax(0.0);
  const Eigen::MatrixXd raw = (act * l.w2.transpose()).rowwise() + l.b2.transpose();
  const double value = head_loss(task_, raw, y, &d_raw);

  const Index first = h * i + h;
  Eigen::Map<Eigen::MatrixXd>(gradient.data() + first, o, h) = d_raw.transpose() * act;
  gradient.segment(first + o * h, o) = d_raw.colwise().sum().transpose();
  const Eigen::MatrixXd d_pre =
      ((d_raw * l.w2).array() * (pre.array() > 0.0).cast<double>()).matrix();
  Eigen::Map<Eigen::MatrixXd>(gradient.data(), h, i) = d_pre.transpose() * x;
  gradient.segment(h * i, h) = d_pre.colwise().sum().transpose();
  return value;
}

Predictions DenseNetwork::link(const Eigen::MatrixXd& raw) const {
  Predictions p;
  p.task = task_;
  switch (task_) {
    case TaskKind::kRegression:
      p.values = raw.col(0);
      return p;
    case TaskKind::kBinclass:
      p.proba.resize(raw.rows(), 2);
      for (Index r = 0; r < raw.rows(); ++r) {
        const double pos = sigmoid(raw(r, 0));
        p.proba(r, 0) = 1.0 - pos;
        p.proba(r, 1) = pos;
      }
      break;
    case TaskKind::kMulticlass:
      p.proba.resize(raw.rows(), raw.cols());
      for (Index r = 0; r < raw.rows(); ++r) {
        const Eigen::RowVectorXd e = (raw.row(r).array() - raw.row(r).maxCoeff()).exp();
        p.proba.row(r) = e / e.sum();
      }
      break;
  }
  assign_argmax_labels(p);
  return p;
}

NetworkPredictor::NetworkPredictor(DenseNetwork network, Eigen::VectorXd input_mean,
                                   Eigen::VectorXd input_scale, double target_mean,
                                   double target_scale)
    : network_(std::move(network)),
      input_mean_(std::move(input_mean)),
      input_scale_(std::move(input_scale)),
      target_mean_(target_mean),
      target_scale_(target_scale) {}

Predictions NetworkPredictor::predict(const Eigen::MatrixXd& rows) const {
  check_width(rows, input_dim());
  const Eigen::MatrixXd z =
      (rows.rowwise() - input_mean_.transpose()).array().rowwise() / input_scale_.transpose().array();
  Predictions p = network_.link(network_.forward(z));
  if (p.task == TaskKind::kRegression) {
    p.values = (p.values.array() * target_scale_ + target_mean_).matrix();
  }
  return p;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(std::shared_ptr<const Predictor> predictor, std::vector<std::size_t> columns,
             std::size_t full_dim)
    : predictor_(std::move(predictor)), columns_(std::move(columns)), full_dim_(full_dim) {
  if (columns_.size() != predictor_->input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model consumes " + std::to_string(predictor_->input_dim()) +
                    " inputs but is bound to " + std::to_string(columns_.size()) + " columns");
  }
}

Predictions Model::predict(const Eigen::MatrixXd& rows) const {
  return predictor_->predict(rows);
}

Predictions Model::predict_full(const Eigen::MatrixXd& rows) const {
  check_width(rows, full_dim_);
  if (columns_.size() == full_dim_) {
    bool identity = true;
    for (std::size_t c = 0; c < columns_.size() && identity; ++c) identity = columns_[c] == c;
    if (identity) return predictor_->predict(rows);
  }
  return predictor_->predict(select_columns(rows, columns_));
}

Model ridge_model(Eigen::VectorXd coefficients, double intercept) {
  const auto dim = static_cast<std::size_t>(coefficients.size());
  std::vector<std::size_t> cols(dim);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  return Model(std::make_shared<RidgePredictor>(std::move(coefficients), intercept),
               std::move(cols), dim);
}

Model linear_classifier(Eigen::MatrixXd weights, Eigen::VectorXd bias, TaskKind task) {
  if (task == TaskKind::kRegression) {
    throw Error(ErrorCode::kInvalidArgument, "linear_classifier needs a classification task");
  }
  const auto outputs = static_cast<std::size_t>(weights.rows());
  const auto inputs = static_cast<std::size_t>(weights.cols());
  if (static_cast<std::size_t>(bias.size()) != outputs ||
      (task == TaskKind::kBinclass && outputs != 1) ||
      (task == TaskKind::kMulticlass && outputs < 3)) {
    throw Error(ErrorCode::kDimensionMismatch, "weights and bias do not fit the task");
  }
  DenseNetwork net(inputs, 0, outputs, task);
  Eigen::Map<Eigen::MatrixXd>(net.params().data(), weights.rows(), weights.cols()) = weights;
  net.params().tail(bias.size()) = bias;
  std::vector<std::size_t> cols(inputs);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  return Model(std::make_shared<NetworkPredictor>(std::move(net), Eigen::VectorXd::Zero(weights.cols()),
                                                  Eigen::VectorXd::Ones(weights.cols())),
               std::move(cols), inputs);
}

// ---------------------------------------------------------------------------
// Training

namespace {

Model fit_ridge(const RidgeParams& p, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                std::vector<std::size_t> cols, std::size_t full_dim) {
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::VectorXd beta;
  if (p.lambda == 0.0) {
    const auto qr = xc.colPivHouseholderQr();
    if (qr.rank() < xc.cols()) {
      throw Error(ErrorCode::kSingularSystem,
                  "ridge with lambda=0 on rank-deficient data (rank " + std::to_string(qr.rank()) +
                      " < " + std::to_string(xc.cols()) + ")");
    }
    beta = qr.solve(yc);
  } else {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += p.lambda;
    const auto llt = gram.llt();
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kSingularSystem, "ridge normal equations are not positive definite");
    }
    beta = llt.solve(xc.transpose() * yc);
  }
  const double intercept = y_mean - x_mean.dot(beta);
  if (!beta.allFinite() || !std::isfinite(intercept)) {
    throw Error(ErrorCode::kNonFiniteLoss, "ridge solution is not finite");
  }
  return Model(std::make_shared<RidgePredictor>(std::move(beta), intercept), std::move(cols),
               full_dim);
}

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x) {
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      const double sd = std::sqrt((x.col(j).array() - s.mean(j)).square().mean());
      s.scale(j) = sd > 0.0 && std::isfinite(sd) ? sd : 1.0;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
};

struct GradientSchedule {
  double lr;
  std::size_t epochs;
  std::size_t batch;
};

Model fit_network(DenseNetwork net, const GradientSchedule& schedule, const Dataset& train,
                  std::vector<std::size_t> cols, std::uint64_t seed, const FitOptions& options) {
  const Eigen::MatrixXd raw_x = select_columns(train.features(), cols);
  const Standardizer standardizer = Standardizer::fit(raw_x);
  const Eigen::MatrixXd x = standardizer.apply(raw_x);
  Eigen::VectorXd y = train.targets();
  double y_mean = 0.0;
  double y_scale = 1.0;
  if (train.task() == TaskKind::kRegression) {
    y_mean = y.mean();
    const double sd = std::sqrt((y.array() - y_mean).square().mean());
    y_scale = sd > 0.0 ? sd : 1.0;
    y = (y.array() - y_mean) / y_scale;
  }

  const bool early_stopping =
      options.validation != nullptr && options.validation->n() > 0 && options.patience > 0;
  Eigen::MatrixXd val_x;
  Eigen::VectorXd val_y;
  if (early_stopping) {
    val_x = standardizer.apply(select_columns(options.validation->features(), cols));
    val_y = options.validation->targets();
    if (train.task() == TaskKind::kRegression) val_y = (val_y.array() - y_mean) / y_scale;
  }

  const std::size_t n = train.n();
  const std::size_t batch = std::clamp<std::size_t>(schedule.batch, 1, n);
  Rng rng(derive_seed(seed, "batches"));
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});

  std::vector<double> history;
  history.push_back(net.loss(x, y));
  if (!std::isfinite(history.back())) {
    throw Error(ErrorCode::kNonFiniteLoss, "initial training loss is not finite");
  }

  Eigen::VectorXd best_params = net.params();
  double best_val = early_stopping ? net.loss(val_x, val_y) : 0.0;
  std::size_t since_best = 0;
  std::size_t epochs_run = 0;
  Eigen::VectorXd grad;

  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    rng.shuffle(std::span<Index>(order));
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const std::vector<Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Eigen::MatrixXd bx = x(idx, Eigen::all);
      const Eigen::VectorXd by = y(idx);
      net.loss_and_gradient(bx, by, grad);
      net.params() -= schedule.lr * grad;
    }
    ++epochs_run;
    const double loss = net.loss(x, y);
    if (!std::isfinite(loss) || !net.params().allFinite()) {
      throw Error(ErrorCode::kNonFiniteLoss,
                  "training diverged at epoch " + std::to_string(epoch + 1));
    }
    history.push_back(loss);
    if (early_stopping) {
      const double v = net.loss(val_x, val_y);
      if (v < best_val) {
        best_val = v;
        best_params = net.params();
        since_best = 0;
      } else if (++since_best >= options.patience) {
        break;
      }
    }
  }
  if (early_stopping) net.params() = best_params;

  const std::size_t full_dim = train.m();
  Model model(std::make_shared<NetworkPredictor>(std::move(net), standardizer.mean,
                                                 standardizer.scale, y_mean, y_scale),
              std::move(cols), full_dim);
  model.loss_history = std::move(history);
  model.epochs_run = epochs_run;
  return model;
}

}  // namespace

Model fit(const PredictorSpec& spec, const Dataset& train, const std::vector<bool>& feature_mask,
          const FitOptions& options) {
  validate(spec);
  if (spec.task != train.task()) {
    throw Error(ErrorCode::kInvalidArgument, "predictor task does not match the dataset task");
  }
  if (feature_mask.size() != train.m()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature mask length does not match the dataset");
  }
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < feature_mask.size(); ++j) {
    if (feature_mask[j]) cols.push_back(j);
  }
  if (cols.empty()) throw Error(ErrorCode::kInvalidArgument, "feature mask selects no features");
  if (train.n() == 0) throw Error(ErrorCode::kInvalidArgument, "training set is empty");

  const std::size_t outputs = train.task() == TaskKind::kMulticlass ? train.num_classes() : 1;
  return std::visit(
      Overloaded{
          [&](const RidgeParams& p) {
            Eigen::MatrixXd x = select_columns(train.features(), cols);
            return fit_ridge(p, x, train.targets(), std::move(cols), train.m());
          },
          [&](const LogisticParams& p) {
            DenseNetwork net(cols.size(), 0, outputs, train.task());
            const std::size_t epochs = options.epochs_override ? options.epochs_override : p.epochs;
            return fit_network(std::move(net), {p.lr, epochs, p.batch}, train, std::move(cols),
                               spec.seed, options);
          },
          [&](const MlpParams& p) {
            DenseNetwork net(cols.size(), p.hidden_width, outputs, train.task());
            net.init_uniform(derive_seed(spec.seed, "init"));
            const std::size_t epochs = options.epochs_override ? options.epochs_override : p.epochs;
            return fit_network(std::move(net), {p.lr, epochs, p.batch}, train, std::move(cols),
                               spec.seed, options);
          },
          [&](const ExternalParams& p) {
            auto predictor = std::make_shared<ExternalPredictor>(p.command, p.timeout_seconds);
            if (predictor->task() != train.task()) {
              throw Error(ErrorCode::kProtocolViolation,
                          "external model task does not match the dataset task");
            }
            return Model(std::move(predictor), std::move(cols), train.m());
          },
      },
      spec.kind);
}

Model external_connect(const std::vector<std::string>& command, double timeout_seconds) {
  auto predictor = std::make_shared<ExternalPredictor>(command, timeout_seconds);
  std::vector<std::size_t> cols(predictor->input_dim());
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  const std::size_t dim = cols.size();
  return Model(std::move(predictor), std::move(cols), dim);
}

}  // namespace gtselect
