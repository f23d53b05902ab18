#include "comicvox/util.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace comicvox {

std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::string_view> keys) {
  std::uint64_t h = fnv1a(std::to_string(seed));
  for (auto key : keys) {
    h = fnv1a("\x1f", h);
    h = fnv1a(key, h);
  }
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  // rejection sampling keeps the draw unbiased
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

namespace {
bool is_continuation(unsigned char c) { return (c & 0xc0) == 0x80; }
}  // namespace

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if (!is_continuation(c)) ++n;
  }
  return n;
}

std::string utf8_truncate(std::string_view s, std::size_t max_code_points) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!is_continuation(static_cast<unsigned char>(s[i]))) {
      if (seen == max_code_points) return std::string(s.substr(0, i));
      ++seen;
    }
  }
  return std::string(s);
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

double percent(std::int64_t num, std::int64_t den) {
  if (den <= 0) return 0.0;
  // floor(1000 * num / den + 1/2) in exact integer arithmetic
  const std::int64_t tenths = (2000 * num + den) / (2 * den);
  return static_cast<double>(tenths) / 10.0;
}

double round1(double value) {
  return std::floor(value * 10.0 + 0.5 + 1e-9) / 10.0;
}

}  // namespace comicvox
