#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace procal {

// Error taxonomy shared by the library and the CLI.
// Exit codes: config=2, data=3, numeric=4, contract=5.
class Error : public std::runtime_error {
 public:
  enum class Kind { Config = 2, Data = 3, Numeric = 4, Contract = 5 };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}

  Kind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  Kind kind_;
};

[[noreturn]] inline void fail(Error::Kind k, const std::string& msg) { throw Error(k, msg); }

inline void require(bool cond, Error::Kind k, const std::string& msg) {
  if (!cond) fail(k, msg);
}

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64 bit) for config/dataset fingerprints.

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Error::Kind::Data, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Error::Kind::Data, "cannot write file: " + path);
  out << content;
}

inline std::uint64_t hash_file(const std::string& path) {
  const std::string bytes = read_text_file(path);
  return fnv1a64(bytes);
}

// ---------------------------------------------------------------------------
// Seeded random substreams. All randomness in a run flows from one root seed;
// independent components draw from named substreams so they can be reproduced
// in isolation and in any order.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name) {
  std::uint64_t state = seed ^ fnv1a64(name);
  const std::uint64_t a = splitmix64(state);
  const std::uint64_t b = splitmix64(state);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------
// Text helpers. Doubles are always printed with "%.17g" so files round-trip
// bit-exactly and reruns are byte-identical.

inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(end != s.c_str() && end == s.c_str() + s.size(), Error::Kind::Data,
          "data error: cannot parse number '" + s + "' in " + where);
  require(std::isfinite(v), Error::Kind::Data, "data error: non-finite value in " + where);
  return v;
}

}  // namespace procal
