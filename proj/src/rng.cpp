#include "dladf/rng.hpp"

#include <cmath>

namespace dladf {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng Rng::for_stream(std::uint64_t seed, std::string_view purpose) {
  return Rng(splitmix64(seed ^ fnv1a64(purpose)));
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mean, double stddev) {
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return mean + stddev * u * std::sqrt(-2.0 * std::log(s) / s);
}

double Rng::exponential(double mean) { return -mean * std::log1p(-uniform01()); }

std::uint64_t Rng::index(std::uint64_t n) {
  // Reject the low (2^64 mod n) values so the modulo is unbiased.
  const std::uint64_t threshold = (0 - n) % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r < threshold);
  return r % n;
}

}  // namespace dladf
