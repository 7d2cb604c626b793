#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace jrnlab {

// Input/configuration problems: bad dimensions, unknown keys, invalid values.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures: singular matrices, divergence, non-finite values.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// File format / persistence problems.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Process exit codes used by the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitNumerical = 3,
  kExitNotCertified = 4,
};

// FNV-1a 64-bit, used to chain config -> dataset -> model -> certificate.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t seed = 14695981039346656037ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

std::string to_hex(std::uint64_t v);

// Reads a whole file; throws IoError if it cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);
std::uint64_t hash_file(const std::string& path);

// Shortest decimal that round-trips a double exactly ("%.17g").
std::string format_g17(double v);

}  // namespace jrnlab
