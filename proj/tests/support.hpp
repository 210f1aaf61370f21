#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gtselect/dataset.hpp"
#include "gtselect/game.hpp"

namespace testing {

// Independent of the library RNG so oracles do not share its code paths.
inline std::mt19937_64 engine(std::uint64_t seed) { return std::mt19937_64(seed); }

// A game given by a value per coalition bitmask (players 0..m-1).
struct TableGame {
  std::size_t m = 0;
  std::vector<double> value;  // 2^m entries

  double operator()(std::uint64_t mask) const { return value[mask]; }

  static std::uint64_t mask_of(const gtselect::Coalition& s) {
    std::uint64_t mask = 0;
    for (const auto p : s.members()) mask |= std::uint64_t{1} << p;
    return mask;
  }

  gtselect::CharacteristicFunction function() const {
    return gtselect::CharacteristicFunction(m, [g = *this](const gtselect::Coalition& s) {
      return g(mask_of(s));
    });
  }
};

inline TableGame random_game(std::size_t m, std::uint64_t seed) {
  auto rng = engine(seed);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  TableGame g{m, std::vector<double>(std::size_t{1} << m)};
  for (auto& v : g.value) v = u(rng);
  return g;
}

inline std::vector<std::size_t> iota(std::size_t m) {
  std::vector<std::size_t> v(m);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// Shapley values by averaging marginal contributions over all m! orders.
inline std::vector<double> brute_force_shapley(const TableGame& g) {
  std::vector<std::size_t> order = iota(g.m);
  std::vector<double> phi(g.m, 0.0);
  double count = 0.0;
  do {
    std::uint64_t mask = 0;
    for (const auto p : order) {
      const std::uint64_t next = mask | (std::uint64_t{1} << p);
      phi[p] += g(next) - g(mask);
      mask = next;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& v : phi) v /= count;
  return phi;
}

inline gtselect::Dataset make_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  std::vector<gtselect::FeatureColumn> cols;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    gtselect::FeatureColumn c;
    c.name = "x" + std::to_string(j);
    c.values.assign(x.col(j).data(), x.col(j).data() + x.rows());
    cols.push_back(std::move(c));
  }
  gtselect::TargetColumn t;
  t.name = "y";
  t.values.assign(y.data(), y.data() + y.size());
  return gtselect::Dataset(std::move(cols), std::move(t), gtselect::TaskKind::kRegression);
}

inline gtselect::Dataset make_classification(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                             std::size_t classes) {
  std::vector<gtselect::FeatureColumn> cols;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    gtselect::FeatureColumn c;
    c.name = "x" + std::to_string(j);
    c.values.assign(x.col(j).data(), x.col(j).data() + x.rows());
    cols.push_back(std::move(c));
  }
  gtselect::TargetColumn t;
  t.name = "y";
  for (const int v : y) t.values.push_back(v);
  t.num_classes = classes;
  return gtselect::Dataset(std::move(cols), std::move(t),
                           classes == 2 ? gtselect::TaskKind::kBinclass
                                        : gtselect::TaskKind::kMulticlass);
}

inline Eigen::MatrixXd gaussian(std::size_t n, std::size_t m, std::uint64_t seed) {
  auto rng = engine(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd x(n, m);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = z(rng);
  return x;
}

// y = sum_{i<5} beta_i x_i + 0.1 eps with beta_i in [1, 3], plus five
// pure-noise columns.
struct Synthetic {
  gtselect::Dataset data;
  Eigen::VectorXd beta;
};

inline Synthetic synthetic_recovery(std::size_t n, std::uint64_t seed) {
  auto rng = engine(seed);
  std::uniform_real_distribution<double> b(1.0, 3.0);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd beta(5);
  for (auto& v : beta) v = b(rng);
  Eigen::MatrixXd x(n, 10);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 10; ++j) x(i, j) = z(rng);
    y(i) = x.row(i).head(5).dot(beta) + 0.1 * z(rng);
  }
  return {make_regression(x, y), beta};
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gtselect_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
