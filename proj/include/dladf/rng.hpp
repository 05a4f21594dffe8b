#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dladf {

// Reproducible random stream.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The distribution transforms are implemented here rather than taken
// from <random> because libstdc++ and libc++ disagree on those algorithms:
//   uniform01   (u >> 11) * 2^-53, in [0, 1)
//   normal      Marsaglia polar method, second variate discarded
//   exponential -mean * log1p(-uniform01)
//   index(n)    rejection of the low 2^64 mod n outputs, then modulo
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for (seed, purpose). The engine seed is
  // splitmix64(seed ^ fnv1a64(purpose)).
  static Rng for_stream(std::uint64_t seed, std::string_view purpose);

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  double normal(double mean, double stddev);
  double exponential(double mean);
  bool bernoulli(double p) { return uniform01() < p; }
  // Uniform integer in [0, n), n >= 1.
  std::uint64_t index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace dladf
