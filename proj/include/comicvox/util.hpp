#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace comicvox {

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a(std::string_view data,
                              std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Mixes a seed with any number of string keys into a generator seed. Used
/// to make noisy backends a pure function of (seed, page, instance).
std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::string_view> keys);

/// mt19937_64 output is fixed by the standard; distributions are not, so
/// sampling goes through these helpers instead of <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

/// Draws min(k, items.size()) distinct items, preserving draw order.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t k,
                                          Rng& rng) {
  if (k > items.size()) k = items.size();
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(k);
  return items;
}

std::string sha256_hex(std::string_view data);

/// Counts UTF-8 code points.
std::size_t utf8_length(std::string_view s);
/// Keeps at most `max_code_points` leading code points.
std::string utf8_truncate(std::string_view s, std::size_t max_code_points);

std::string ascii_lower(std::string_view s);
/// Trims and collapses internal whitespace runs to a single space.
std::string normalize_whitespace(std::string_view s);

/// Percentage num/den*100 rounded half-up to one decimal; 0 when den == 0.
double percent(std::int64_t num, std::int64_t den);
/// Rounds half-up to one decimal.
double round1(double value);

}  // namespace comicvox
