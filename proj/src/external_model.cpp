#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <nlohmann/json.hpp>

#include "gtselect/error.hpp"
#include "gtselect/models.hpp"

extern char** environ;

namespace gtselect {

namespace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

void stop_child(int& pid) {
  if (pid <= 0) return;
  for (int i = 0; i < 100; ++i) {
    int status = 0;
    if (::waitpid(pid, &status, WNOHANG) == pid) {
      pid = -1;
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  pid = -1;
}

json parse_reply(const std::string& line) {
  try {
    auto j = json::parse(line);
    if (!j.is_object()) throw Error(ErrorCode::kProtocolViolation, "reply is not a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocolViolation, std::string("malformed reply: ") + e.what());
  }
}

void check_id(const json& reply, std::uint64_t id) {
  if (!reply.contains("id") || !reply["id"].is_number_integer() ||
      reply["id"].get<std::uint64_t>() != id) {
    throw Error(ErrorCode::kProtocolViolation,
                "reply id mismatch (expected " + std::to_string(id) + ")");
  }
}

}  // namespace

ExternalPredictor::ExternalPredictor(const std::vector<std::string>& command,
                                     double timeout_seconds)
    : timeout_(static_cast<std::int64_t>(std::ceil(timeout_seconds * 1000.0))) {
  if (command.empty()) throw Error(ErrorCode::kSpawnFailure, "empty model command");

  // A socket for the child's stdin lets writes use MSG_NOSIGNAL.
  int in_pair[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, in_pair) != 0) {
    throw Error(ErrorCode::kSpawnFailure, std::string("socketpair: ") + std::strerror(errno));
  }
  int out_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pair[0]);
    ::close(in_pair[1]);
    throw Error(ErrorCode::kSpawnFailure, std::string("pipe: ") + std::strerror(errno));
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pair[1], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  std::vector<char*> argv;
  for (const auto& arg : command) argv.push_back(const_cast<char*>(arg.c_str()));
  argv.push_back(nullptr);

  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pair[1]);
  ::close(out_pipe[1]);
  to_child_ = in_pair[0];
  from_child_ = out_pipe[0];
  if (rc != 0) {
    close_fd(to_child_);
    close_fd(from_child_);
    throw Error(ErrorCode::kSpawnFailure,
                "cannot spawn '" + command[0] + "': " + std::strerror(rc));
  }
  pid_ = pid;

  try {
    const std::uint64_t id = next_id_++;
    const json reply = parse_reply(round_trip(json{{"id", id}, {"op", "info"}}.dump()));
    check_id(reply, id);
    if (!reply.contains("task") || !reply["task"].is_string() || !reply.contains("n_features") ||
        !reply["n_features"].is_number_integer() || reply["n_features"].get<std::int64_t>() < 1) {
      throw Error(ErrorCode::kProtocolViolation, "info reply lacks task or n_features");
    }
    try {
      task_ = parse_task(reply["task"].get<std::string>());
    } catch (const Error&) {
      throw Error(ErrorCode::kProtocolViolation,
                  "info reply names unknown task '" + reply["task"].get<std::string>() + "'");
    }
    n_features_ = reply["n_features"].get<std::size_t>();
  } catch (...) {
    close_fd(to_child_);
    close_fd(from_child_);
    ::kill(pid_, SIGKILL);
    stop_child(pid_);
    throw;
  }
}

ExternalPredictor::~ExternalPredictor() {
  close_fd(to_child_);
  stop_child(pid_);
  close_fd(from_child_);
}

std::string ExternalPredictor::read_line() const {
  const auto deadline = Clock::now() + timeout_;
  for (;;) {
    const auto newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (remaining.count() <= 0) {
      throw Error(ErrorCode::kTimeout, "external model did not reply in time");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kProtocolViolation, std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) throw Error(ErrorCode::kTimeout, "external model did not reply in time");
    char chunk[4096];
    const ssize_t got = ::read(from_child_, chunk, sizeof(chunk));
    if (got < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kProtocolViolation, std::string("read: ") + std::strerror(errno));
    }
    if (got == 0) throw Error(ErrorCode::kProtocolViolation, "external model closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(got));
  }
}

std::string ExternalPredictor::round_trip(const std::string& request) const {
  const std::string line = request + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = ::send(to_child_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kProtocolViolation,
                  std::string("cannot write to external model: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  return read_line();
}

Predictions ExternalPredictor::predict(const Eigen::MatrixXd& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != n_features_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "rows have " + std::to_string(rows.cols()) + " columns, external model expects " +
                    std::to_string(n_features_));
  }
  json payload = json::array();
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < rows.cols(); ++c) row.push_back(rows(r, c));
    payload.push_back(std::move(row));
  }

  const std::lock_guard lock(mutex_);
  const std::uint64_t id = next_id_++;
  json request{{"id", id}, {"op", "predict"}};
  request["rows"] = std::move(payload);
  const json reply = parse_reply(round_trip(request.dump()));
  check_id(reply, id);
  if (!reply.contains("predictions") || !reply["predictions"].is_array() ||
      reply["predictions"].size() != static_cast<std::size_t>(rows.rows())) {
    throw Error(ErrorCode::kProtocolViolation, "reply must carry one prediction per row");
  }
  const auto& preds = reply["predictions"];

  Predictions p;
  p.task = task_;
  try {
    if (task_ == TaskKind::kRegression) {
      p.values.resize(rows.rows());
      for (std::size_t r = 0; r < preds.size(); ++r) {
        const double v = preds[r].get<double>();
        if (!std::isfinite(v)) throw Error(ErrorCode::kProtocolViolation, "non-finite prediction");
        p.values(static_cast<Eigen::Index>(r)) = v;
      }
      return p;
    }
    const std::size_t k = preds.empty() ? (task_ == TaskKind::kBinclass ? 2 : 3) : preds[0].size();
    if (k < 2 || (task_ == TaskKind::kBinclass && k != 2)) {
      throw Error(ErrorCode::kProtocolViolation, "probability rows have the wrong width");
    }
    p.proba.resize(rows.rows(), static_cast<Eigen::Index>(k));
    for (std::size_t r = 0; r < preds.size(); ++r) {
      if (!preds[r].is_array() || preds[r].size() != k) {
        throw Error(ErrorCode::kProtocolViolation, "probability rows must share one width");
      }
      for (std::size_t c = 0; c < k; ++c) {
        const double v = preds[r][c].get<double>();
        if (!(v >= 0.0 && v <= 1.0)) {
          throw Error(ErrorCode::kProtocolViolation, "probability outside [0, 1]");
        }
        p.proba(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocolViolation, std::string("malformed predictions: ") + e.what());
  }
  assign_argmax_labels(p);
  return p;
}

}  // namespace gtselect
