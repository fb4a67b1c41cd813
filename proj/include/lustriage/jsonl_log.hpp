#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace lustriage {

/// Append-only file of JSON objects, one per line. Each append is flushed
/// and synced before returning. A torn final line (no trailing newline) is
/// ignored on read.
class JsonLinesLog {
 public:
  explicit JsonLinesLog(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const { return path_; }

  std::vector<nlohmann::json> read_all() const;
  void append(const nlohmann::json& record) const;

 private:
  std::filesystem::path path_;
};

/// Current UTC time, RFC 3339 with second precision ("2024-01-31T12:00:00Z").
std::string utc_now_rfc3339();

}  // namespace lustriage
