#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace countex {

/// Named, seeded random stream. Identical (seed, label) pairs produce
/// bit-identical sequences on every platform: the engine is mt19937_64 and
/// all distributions are implemented here rather than taken from <random>,
/// whose distribution algorithms are implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label);

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }

  /// Independent stream derived from this one's seed and an extended label.
  RngStream child(std::string_view sublabel) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi], unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller (one cached spare).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace countex
