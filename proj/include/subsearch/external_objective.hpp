// SPDX-License-Identifier: Apache-2.0
//
// Objective backed by a child process speaking line-delimited JSON on its standard
// streams. One request per batch:
//   {"id":int,"dim":int,"noise_key":{"t_seed":int,"eps_seed":int},"candidates":[[float,...],...]}
// answered by exactly one line:
//   {"id":int,"fitness":[float,...]}
// A child may instead answer {"id":-1,"error":"..."}; that surfaces as an EvaluationError.
#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <sys/types.h>

#include "subsearch/objectives.hpp"

namespace subsearch {

class ExternalObjective final : public Objective {
 public:
  ExternalObjective(std::string command, std::size_t dim,
                    std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));
  ~ExternalObjective() override;

  ExternalObjective(const ExternalObjective&) = delete;
  ExternalObjective& operator=(const ExternalObjective&) = delete;

  std::size_t dim() const override { return dim_; }
  double evaluate(const Vector& e, const NoiseKey& key) const override;
  std::vector<double> batch_evaluate(std::span<const Vector> es, const NoiseKey& key) const override;
  bool concurrent_evaluation() const override { return false; }

  const std::string& command() const noexcept { return command_; }
  pid_t pid() const noexcept { return pid_; }
  std::uint64_t requests_sent() const noexcept { return next_id_; }

 private:
  void write_line(const std::string& line) const;
  std::string read_line() const;
  std::string child_status() const;
  void shutdown() noexcept;

  std::string command_;
  std::size_t dim_;
  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_id_ = 0;
  mutable std::string buffer_;
  mutable bool broken_ = false;
};

/// Builds the request line for a batch (exposed for protocol tests).
std::string format_request(std::uint64_t id, std::size_t dim, const NoiseKey& key, std::span<const Vector> candidates);

/// Parses and validates one response line against the request id and batch size.
std::vector<double> parse_response(const std::string& line, std::uint64_t expected_id, std::size_t expected_count);

}  // namespace subsearch
