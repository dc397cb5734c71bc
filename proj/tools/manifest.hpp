#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "fdrbound/error.hpp"

namespace fdrbound::cli {

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::missing_file, fmt::format("cannot open '{}'", path));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Written next to the outputs of a run. config is the resolved configuration;
// its compact dump (sorted keys) is what gets hashed.
struct Manifest {
  std::string subcommand;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const {
    return {{"subcommand", subcommand},
            {"config_digest", sha256_hex(config.dump())},
            {"config", config},
            {"seed", seed},
            {"tool_version", tool_version},
            {"timestamp", utc_now()},
            {"outputs", outputs}};
  }
};

}  // namespace fdrbound::cli
