#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "rar/error.hpp"

namespace rar {

// Content-addressed response store: one file per cache key, named by the
// key's hex digest, holding the raw response text plus request metadata.
class FileCache {
 public:
  struct Entry {
    std::string response;
    nlohmann::json metadata;
  };

  explicit FileCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cache: cannot create directory " + dir_.string());
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<Entry> get(const std::string& key_hex) const {
    const std::filesystem::path path = entry_path(key_hex);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
      in >> j;
      Entry e;
      e.response = j.at("response").get<std::string>();
      e.metadata = j.value("metadata", nlohmann::json::object());
      return e;
    } catch (const nlohmann::json::exception&) {
      // A corrupt entry behaves like a miss; it gets overwritten on put.
      return std::nullopt;
    }
  }

  void put(const std::string& key_hex, const Entry& entry) const {
    const std::filesystem::path path = entry_path(key_hex);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cache: cannot write " + tmp.string());
      nlohmann::json j{{"metadata", entry.metadata}, {"response", entry.response}};
      out << j.dump(2) << '\n';
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cache: cannot finalize " + path.string());
  }

  struct Stats {
    std::size_t entries = 0;
    std::uintmax_t bytes = 0;
  };

  Stats stats() const {
    Stats s;
    std::error_code ec;
    for (const auto& de : std::filesystem::directory_iterator(dir_, ec)) {
      if (!de.is_regular_file() || de.path().extension() != ".json") continue;
      ++s.entries;
      s.bytes += de.file_size();
    }
    return s;
  }

  std::size_t clear() const {
    std::size_t removed = 0;
    std::error_code ec;
    for (const auto& de : std::filesystem::directory_iterator(dir_, ec)) {
      if (!de.is_regular_file() || de.path().extension() != ".json") continue;
      std::filesystem::remove(de.path(), ec);
      if (!ec) ++removed;
    }
    return removed;
  }

 private:
  std::filesystem::path entry_path(const std::string& key_hex) const {
    return dir_ / (key_hex + ".json");
  }

  std::filesystem::path dir_;
};

}  // namespace rar
