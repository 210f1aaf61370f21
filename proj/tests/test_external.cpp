#include <doctest.h>

#include <chrono>

#include "gtselect/error.hpp"
#include "gtselect/models.hpp"

using namespace gtselect;

#ifndef FAKE_MODEL_SERVER
#error "FAKE_MODEL_SERVER must point at the test server binary"
#endif

namespace {

std::vector<std::string> server(const std::string& mode, int n_features = 4) {
  return {FAKE_MODEL_SERVER, mode, std::to_string(n_features)};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("handshake records task and width") {
  const Model m = external_connect(server("regression", 4));
  CHECK(m.input_dim() == 4);
  CHECK(m.task() == TaskKind::kRegression);
}

TEST_CASE("predictions come back in request order") {
  const Model m = external_connect(server("regression", 2));
  Eigen::MatrixXd rows(2, 2);
  rows << 1, 2, 10, 20;
  const Predictions p = m.predict(rows);
  REQUIRE(p.values.size() == 2);
  CHECK(p.values(0) == 3.0);
  CHECK(p.values(1) == 30.0);
  // Repeated requests keep working on the same connection.
  CHECK(m.predict(rows).values == p.values);
}

TEST_CASE("classification replies are probability rows") {
  const Model b = external_connect(server("binclass", 1));
  Eigen::MatrixXd rows(2, 1);
  rows << 0, 100;
  const Predictions p = b.predict(rows);
  CHECK(p.proba(0, 1) == doctest::Approx(0.5));
  CHECK(p.labels[1] == 1);
  const Model m = external_connect(server("multiclass", 1));
  CHECK(m.predict(rows).labels[1] == 0);
}

TEST_CASE("protocol violations") {
  CHECK(code_of([] { external_connect(server("bad-id")).predict(Eigen::MatrixXd::Zero(1, 4)); }) ==
        ErrorCode::kProtocolViolation);
  CHECK(code_of([] { external_connect(server("garbage")); }) == ErrorCode::kProtocolViolation);
  CHECK(code_of([] { external_connect(server("exit")).predict(Eigen::MatrixXd::Zero(1, 4)); }) ==
        ErrorCode::kProtocolViolation);
  CHECK(code_of([] {
          external_connect(server("wrong-count")).predict(Eigen::MatrixXd::Zero(2, 4));
        }) == ErrorCode::kProtocolViolation);
}

TEST_CASE("width mismatch is rejected before sending") {
  const Model m = external_connect(server("regression", 3));
  CHECK(code_of([&] { m.predict(Eigen::MatrixXd::Zero(1, 2)); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("silent peer times out") {
  const auto start = std::chrono::steady_clock::now();
  CHECK(code_of([] { external_connect(server("silent"), 0.3).predict(Eigen::MatrixXd::Zero(1, 4)); }) ==
        ErrorCode::kTimeout);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));
}

TEST_CASE("unspawnable command") {
  CHECK(code_of([] { external_connect({"/nonexistent/gtselect-model"}); }) == ErrorCode::kSpawnFailure);
  CHECK(code_of([] { external_connect({}); }) != ErrorCode::kTimeout);
}
