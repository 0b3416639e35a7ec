#pragma once

#include <cmath>
#include <cstdint>

namespace tmld::rng {

// Counter-based generator: every draw is a pure function of (seed, stream,
// step, slot), so chains are reproducible bit-for-bit and independent chains
// can share a seed family without coordination.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b + 0x9e3779b97f4a7c15ULL)); }

// Uniform in (0,1), strictly excluding the endpoints.
inline double to_unit(uint64_t z) { return (static_cast<double>(z >> 11) + 0.5) * (1.0 / 9007199254740992.0); }

struct Stream {
  uint64_t key;

  Stream(uint64_t seed, uint64_t stream_id = 0) : key(mix(seed, stream_id)) {}

  double uniform(uint64_t step, uint64_t slot = 0) const { return to_unit(splitmix64(key ^ mix(step, slot))); }

  // d independent standard normals for a given step counter (Box-Muller).
  void normals(uint64_t step, double* out, int d) const {
    for (int j = 0; j < d; j += 2) {
      double u1 = uniform(step, static_cast<uint64_t>(j));
      double u2 = uniform(step, static_cast<uint64_t>(j) + 1);
      double r = std::sqrt(-2.0 * std::log(u1));
      double a = 6.283185307179586476925286766559 * u2;
      out[j] = r * std::cos(a);
      if (j + 1 < d) out[j + 1] = r * std::sin(a);
    }
  }

  double normal(uint64_t step, uint64_t slot = 0) const {
    double u1 = uniform(step, 2 * slot);
    double u2 = uniform(step, 2 * slot + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }
};

}  // namespace tmld::rng
