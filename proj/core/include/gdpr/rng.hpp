#pragma once

#include <cstdint>
#include <limits>
#include <utility>

namespace gdpr {

// Counter-based generator: the n-th draw is a pure function of (seed, stream, n).
// Streams let independent consumers (weight init, dropout, shuffling) share a
// seed without correlating. Output is identical on every platform, unlike the
// std:: distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
      : key_(mix(seed ^ mix(stream + 0x6a09e667f3bcc909ULL))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return next(); }

  std::uint64_t next() noexcept {
    return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection; unbiased.
    __extension__ using u128 = unsigned __int128;
    u128 m = static_cast<u128>(next()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<u128>(next()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // A generator on an independent stream derived from this one's key.
  Rng fork(std::uint64_t stream) const noexcept {
    Rng child;
    child.key_ = mix(key_ ^ mix(stream + 0xbb67ae8584caa73bULL));
    return child;
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Fisher-Yates shuffle driven by Rng (std::shuffle is not portable across
// standard libraries).
template <typename RandomIt>
void shuffle(RandomIt first, RandomIt last, Rng& rng) {
  const auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    const auto j = static_cast<decltype(i)>(rng.below(static_cast<std::uint64_t>(i) + 1));
    using std::swap;
    swap(first[i], first[j]);
  }
}

}  // namespace gdpr
