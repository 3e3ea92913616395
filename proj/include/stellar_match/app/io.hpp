#pragma once

// Output files. Every file carries the resolved config and a content hash;
// a single process owns an output directory through a lockfile.

#include <array>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stellar_match/errors.hpp"

namespace stellar_match::app {

using json = nlohmann::ordered_json;

/// File system or locking failure (exit code 1).
class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Shortest round-trip decimal form.
inline std::string format_number(double x) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

class OutputDir {
 public:
  OutputDir(std::filesystem::path dir, json config)
      : dir_(std::move(dir)), config_(std::move(config)), config_text_(config_.dump()) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    lock_ = dir_ / ".stellar_match.lock";
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f) {
      throw IoError(errno == EEXIST ? "output directory " + dir_.string() +
                                          " is locked by another run (" + lock_.string() + ")"
                                    : "cannot create lockfile " + lock_.string() + ": " +
                                          std::strerror(errno));
    }
    std::fclose(f);
  }
  ~OutputDir() {
    std::error_code ec;
    std::filesystem::remove(lock_, ec);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  const std::filesystem::path& path() const { return dir_; }
  const std::vector<std::string>& written() const { return written_; }

  /// Hash of the config text and the payload.
  std::string content_hash(std::string_view payload) const {
    return hex64(fnv1a64(config_text_ + "\n" + std::string(payload)));
  }

  /// Header comments carry config and hash; the table follows.
  template <std::size_t N>
  void write_csv(const std::string& name, const std::array<std::string, N>& columns,
                 std::span<const std::array<double, N>> rows) {
    std::ostringstream body;
    for (std::size_t i = 0; i < N; ++i) body << (i ? "," : "") << columns[i];
    body << "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < N; ++i) body << (i ? "," : "") << format_number(row[i]);
      body << "\n";
    }
    const std::string payload = body.str();
    write_text(name, "# config: " + config_text_ + "\n# content_hash: " +
                         content_hash(payload) + "\n" + payload);
  }

  template <std::size_t N>
  void write_csv(const std::string& name, const std::array<std::string, N>& columns,
                 const std::vector<std::array<double, N>>& rows) {
    write_csv(name, columns, std::span<const std::array<double, N>>(rows));
  }

  /// Table as a JSON document: {"config", "content_hash", "columns", "rows"}.
  template <std::size_t N>
  void write_table_json(const std::string& name, const std::array<std::string, N>& columns,
                        const std::vector<std::array<double, N>>& rows) {
    json data;
    data["columns"] = columns;
    data["rows"] = json::array();
    for (const auto& row : rows) data["rows"].push_back(row);
    write_json(name, std::move(data));
  }

  /// {"config", "content_hash", ...data}.
  void write_json(const std::string& name, json data) {
    const std::string payload = data.dump();
    json doc;
    doc["config"] = config_;
    doc["content_hash"] = content_hash(payload);
    for (auto& [k, v] : data.items()) doc[k] = v;
    write_text(name, doc.dump(2) + "\n");
  }

  /// First line is a header record {"config", "content_hash"}, then one
  /// record per line.
  void write_jsonl(const std::string& name, const std::vector<json>& records) {
    std::string payload;
    for (const auto& r : records) payload += r.dump() + "\n";
    json head;
    head["config"] = config_;
    head["content_hash"] = content_hash(payload);
    write_text(name, head.dump() + "\n" + payload);
  }

 private:
  void write_text(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
    written_.push_back(p.string());
  }

  std::filesystem::path dir_;
  std::filesystem::path lock_;
  json config_;
  std::string config_text_;
  std::vector<std::string> written_;
};

}  // namespace stellar_match::app
