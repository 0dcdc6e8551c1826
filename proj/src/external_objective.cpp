// SPDX-License-Identifier: Apache-2.0
#include "subsearch/external_objective.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <poll.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "subsearch/errors.hpp"

namespace subsearch {
namespace {

using Clock = std::chrono::steady_clock;

void ignore_sigpipe_once() {
  static const bool installed = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)installed;
}

std::string truncate(const std::string& s, std::size_t limit = 200) {
  return s.size() <= limit ? s : s.substr(0, limit) + "...";
}

}  // namespace

std::string format_request(std::uint64_t id, std::size_t dim, const NoiseKey& key,
                           std::span<const Vector> candidates) {
  nlohmann::ordered_json request;
  request["id"] = id;
  request["dim"] = dim;
  request["noise_key"] = {{"t_seed", key.t_seed}, {"eps_seed", key.eps_seed}};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const Vector& c : candidates) rows.push_back(std::vector<double>(c.begin(), c.end()));
  request["candidates"] = std::move(rows);
  return request.dump();
}

std::vector<double> parse_response(const std::string& line, std::uint64_t expected_id, std::size_t expected_count) {
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& error) {
    throw ProtocolError(fmt::format("malformed response JSON ({}): {}", error.what(), truncate(line)));
  }
  if (!response.is_object()) throw ProtocolError("response is not a JSON object: " + truncate(line));
  if (response.contains("error")) {
    throw EvaluationError(fmt::format("external objective reported an error: {}", response["error"].dump()));
  }
  if (!response.contains("id") || !response["id"].is_number_integer()) {
    throw ProtocolError("response lacks an integer id: " + truncate(line));
  }
  if (response["id"].get<std::int64_t>() < 0 || response["id"].get<std::uint64_t>() != expected_id) {
    throw ProtocolError(fmt::format("response id {} does not match request id {}", response["id"].dump(), expected_id));
  }
  if (!response.contains("fitness") || !response["fitness"].is_array()) {
    throw ProtocolError("response lacks a fitness array: " + truncate(line));
  }
  const auto& fitness = response["fitness"];
  if (fitness.size() != expected_count) {
    throw ProtocolError(fmt::format("response carries {} fitness values for {} candidates", fitness.size(),
                                    expected_count));
  }
  std::vector<double> out;
  out.reserve(expected_count);
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    const auto& value = fitness[i];
    if (value.is_null()) throw EvaluationError(fmt::format("non-finite fitness (null) for candidate {}", i));
    if (!value.is_number()) throw ProtocolError(fmt::format("fitness {} is not a number: {}", i, value.dump()));
    const double f = value.get<double>();
    if (!std::isfinite(f)) throw EvaluationError(fmt::format("non-finite fitness {} for candidate {}", f, i));
    out.push_back(f);
  }
  return out;
}

ExternalObjective::ExternalObjective(std::string command, std::size_t dim, std::chrono::milliseconds timeout)
    : command_(std::move(command)), dim_(dim), timeout_(timeout) {
  if (dim_ == 0) throw DomainError("ExternalObjective: dim must be positive");
  if (command_.empty()) throw ConfigError("ExternalObjective: empty command", "objective.external.command");
  ignore_sigpipe_once();

  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw EvaluationError(fmt::format("pipe failed: {}", std::strerror(errno)));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw EvaluationError(fmt::format("pipe failed: {}", std::strerror(errno)));
  }
  pid_ = fork();
  if (pid_ < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw EvaluationError(fmt::format("fork failed: {}", std::strerror(errno)));
  }
  if (pid_ == 0) {
    // Own process group, so a kill also reaches whatever the shell started.
    setpgid(0, 0);
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    std::signal(SIGPIPE, SIG_DFL);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ExternalObjective::~ExternalObjective() { shutdown(); }

void ExternalObjective::shutdown() noexcept {
  if (to_child_ >= 0) close(to_child_);
  to_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    const auto deadline = Clock::now() + std::chrono::seconds(2);
    while (waitpid(pid_, &status, WNOHANG) == 0) {
      if (Clock::now() > deadline) {
        kill(-pid_, SIGKILL);
        waitpid(pid_, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    pid_ = -1;
  }
  if (from_child_ >= 0) close(from_child_);
  from_child_ = -1;
}

std::string ExternalObjective::child_status() const {
  if (pid_ <= 0) return "not running";
  int status = 0;
  const pid_t r = waitpid(pid_, &status, WNOHANG);
  if (r == 0) return "still running";
  if (r < 0) return "already reaped";
  // Reaped here; later waitpid calls in shutdown() simply fail.
  if (WIFEXITED(status)) return fmt::format("exited with status {}", WEXITSTATUS(status));
  if (WIFSIGNALED(status)) return fmt::format("killed by signal {}", WTERMSIG(status));
  return "stopped";
}

void ExternalObjective::write_line(const std::string& line) const {
  std::string payload = line + "\n";
  std::size_t written = 0;
  while (written < payload.size()) {
    const ssize_t n = write(to_child_, payload.data() + written, payload.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw ProtocolError(fmt::format("external objective '{}' stopped accepting requests ({}; child {})", command_,
                                      std::strerror(errno), child_status()));
    }
    written += static_cast<std::size_t>(n);
  }
}

std::string ExternalObjective::read_line() const {
  const auto deadline = Clock::now() + timeout_;
  for (;;) {
    if (const auto newline = buffer_.find('\n'); newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (remaining.count() <= 0) {
      broken_ = true;
      throw ProtocolError(fmt::format("external objective '{}' timed out after {} ms", command_, timeout_.count()));
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw ProtocolError(fmt::format("poll failed: {}", std::strerror(errno)));
    }
    if (ready == 0) continue;
    char chunk[65536];
    const ssize_t n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw ProtocolError(fmt::format("read from external objective failed: {}", std::strerror(errno)));
    }
    if (n == 0) {
      broken_ = true;
      // Give the child a moment to be reaped so the diagnostic names its exit status.
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      throw ProtocolError(fmt::format("external objective '{}' closed its output ({})", command_, child_status()));
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::vector<double> ExternalObjective::batch_evaluate(std::span<const Vector> es, const NoiseKey& key) const {
  std::lock_guard lock(mutex_);
  if (broken_) throw ProtocolError(fmt::format("external objective '{}' is no longer usable", command_));
  for (std::size_t i = 0; i < es.size(); ++i) {
    if (static_cast<std::size_t>(es[i].size()) != dim_) {
      throw DomainError(fmt::format("external objective: candidate {} has length {}, expected {}", i, es[i].size(), dim_));
    }
  }
  const std::uint64_t id = next_id_++;
  write_line(format_request(id, dim_, key, es));
  return parse_response(read_line(), id, es.size());
}

double ExternalObjective::evaluate(const Vector& e, const NoiseKey& key) const {
  return batch_evaluate(std::span<const Vector>(&e, 1), key).front();
}

}  // namespace subsearch
