#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace felan::io {

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

nlohmann::json read_json(const std::filesystem::path& path);

/// Named float64 arrays plus a JSON manifest, in one binary file:
///   "FELANCK1" | u64 manifest length | manifest | array payloads.
/// The manifest lists each array's name and length in payload order.
struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::map<std::string, std::vector<double>> arrays;
};

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace felan::io
