#include "felan/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "felan/error.hpp"

namespace felan::io {

namespace {
constexpr char kMagic[8] = {'F', 'E', 'L', 'A', 'N', 'C', 'K', '1'};
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot rename onto " + path.string());
  }
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json manifest = ck.manifest;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, values] : ck.arrays) index.push_back({{"name", name}, {"length", values.size()}});
  manifest["arrays"] = index;
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  for (const auto& [name, values] : ck.arrays) {
    out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::ParseError, "not a checkpoint file");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof(kMagic), sizeof(len));
  std::size_t pos = sizeof(kMagic) + sizeof(len);
  if (bytes.size() - pos < len) throw Error(ErrorCode::ParseError, "truncated checkpoint manifest");

  Checkpoint ck;
  try {
    ck.manifest = nlohmann::json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint manifest: ") + e.what());
  }
  pos += len;
  if (!ck.manifest.contains("arrays")) throw Error(ErrorCode::ParseError, "checkpoint manifest lacks arrays");
  for (const auto& entry : ck.manifest["arrays"]) {
    const std::string name = entry.at("name").get<std::string>();
    const std::size_t n = entry.at("length").get<std::size_t>();
    if (bytes.size() - pos < n * sizeof(double)) throw Error(ErrorCode::ParseError, "truncated array " + name);
    std::vector<double> values(n);
    if (n != 0) std::memcpy(values.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    ck.arrays.emplace(name, std::move(values));
  }
  if (pos != bytes.size()) throw Error(ErrorCode::ParseError, "trailing bytes in checkpoint");
  ck.manifest.erase("arrays");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace felan::io
