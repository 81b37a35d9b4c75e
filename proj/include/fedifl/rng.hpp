#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "fedifl/tensor.hpp"

namespace fedifl {

// splitmix64 finalizer; used for combining seeds so that per-client /
// per-phase streams never collide or depend on scheduling.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_seed(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x6a09e667f3bcc908ull;
  for (uint64_t p : parts) h = mix64(h ^ p);
  return h;
}

/// Deterministic RNG. mt19937_64 output is fully specified by the standard;
/// the uniform/normal mappings are hand-rolled so streams are identical
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) { return static_cast<int>(gen_() % static_cast<uint64_t>(n)); }

  // Box-Muller, two draws per call
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  template <class Scalar>
  void fill_uniform(ArrayX<Scalar>& a, Scalar lo, Scalar hi) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
      a[i] = static_cast<Scalar>(uniform(static_cast<double>(lo), static_cast<double>(hi)));
  }

  template <class Scalar>
  void fill_normal(ArrayX<Scalar>& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = static_cast<Scalar>(normal());
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(gen_() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fedifl
