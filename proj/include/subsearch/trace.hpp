// SPDX-License-Identifier: Apache-2.0
//
// Per-generation trace as JSON lines:
//   {"gen":int,"evals":int,"f_best_gen":float,"f_star":float,"sigma":float,"m_norm":float,"c_cond":float,"ms":int}
// Floats carry 17 significant digits so every value round-trips exactly.
#pragma once

#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subsearch/cmaes.hpp"

namespace subsearch {

std::string format_trace_line(const TraceRecord& record);
TraceRecord parse_trace_line(std::string_view line);

/// Writes all records, truncating `path`. An empty span creates an empty file.
void emit_trace(std::span<const TraceRecord> records, const std::filesystem::path& path);
std::vector<TraceRecord> read_trace(const std::filesystem::path& path);

/// Appends one line per record and flushes, so a run that aborts keeps its partial trace.
class TraceWriter {
 public:
  explicit TraceWriter(std::filesystem::path path);
  ~TraceWriter();
  TraceWriter(const TraceWriter&) = delete;
  TraceWriter& operator=(const TraceWriter&) = delete;

  void append(const TraceRecord& record);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
};

}  // namespace subsearch
