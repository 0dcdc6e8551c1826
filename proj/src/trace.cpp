// SPDX-License-Identifier: Apache-2.0
#include "subsearch/trace.hpp"

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "subsearch/errors.hpp"

namespace subsearch {
namespace {

std::string number(double x) { return std::isfinite(x) ? fmt::format("{:.17g}", x) : std::string("null"); }

double read_number(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nan("");
  return v.get<double>();
}

std::FILE* open_or_throw(const std::filesystem::path& path, const char* mode) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::FILE* f = std::fopen(path.c_str(), mode);
  if (f == nullptr) throw IoError(fmt::format("cannot open '{}': {}", path.string(), std::strerror(errno)));
  return f;
}

}  // namespace

std::string format_trace_line(const TraceRecord& r) {
  return fmt::format(R"({{"gen":{},"evals":{},"f_best_gen":{},"f_star":{},"sigma":{},"m_norm":{},"c_cond":{},"ms":{}}})",
                     r.gen, r.evals, number(r.f_best_gen), number(r.f_star), number(r.sigma), number(r.m_norm),
                     number(r.c_cond), r.ms);
}

TraceRecord parse_trace_line(std::string_view line) {
  try {
    const nlohmann::json j = nlohmann::json::parse(line);
    TraceRecord r;
    r.gen = j.at("gen").get<std::uint64_t>();
    r.evals = j.at("evals").get<std::uint64_t>();
    r.f_best_gen = read_number(j, "f_best_gen");
    r.f_star = read_number(j, "f_star");
    r.sigma = read_number(j, "sigma");
    r.m_norm = read_number(j, "m_norm");
    r.c_cond = read_number(j, "c_cond");
    r.ms = j.at("ms").get<std::int64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(fmt::format("malformed trace line ({}): {}", e.what(), line.substr(0, 200)));
  }
}

void emit_trace(std::span<const TraceRecord> records, const std::filesystem::path& path) {
  std::FILE* f = open_or_throw(path, "wb");
  bool ok = true;
  for (const TraceRecord& r : records) {
    const std::string line = format_trace_line(r) + "\n";
    ok = ok && std::fwrite(line.data(), 1, line.size(), f) == line.size();
  }
  ok = (std::fclose(f) == 0) && ok;
  if (!ok) throw IoError(fmt::format("failed writing trace '{}'", path.string()));
}

std::vector<TraceRecord> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read trace '{}'", path.string()));
  std::vector<TraceRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(parse_trace_line(line));
  }
  return records;
}

TraceWriter::TraceWriter(std::filesystem::path path) : path_(std::move(path)), file_(open_or_throw(path_, "wb")) {}

TraceWriter::~TraceWriter() {
  if (file_ != nullptr) std::fclose(file_);
}

void TraceWriter::append(const TraceRecord& record) {
  const std::string line = format_trace_line(record) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
    throw IoError(fmt::format("failed writing trace '{}'", path_.string()));
  }
}

}  // namespace subsearch
