#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace umif {

// Precondition / shape-contract violations. The message names the operation
// and the offending dimensions.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A forward op produced NaN/Inf from finite inputs, or finite-ness of an
// input buffer was violated.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed external file (binvox, VOXG, IMGF, checkpoint, manifest).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command line / config; the CLI maps this to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derive an independent stream seed from a master seed plus stream tags.
inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = splitmix64(master);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  s = splitmix64(s ^ c);
  return s;
}

// Deterministic RNG. mt19937_64 raw output is pinned by the standard; the
// std distributions are not, so uniforms and normals are derived by hand.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(splitmix64(seed)) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    double u = uniform();
    int64_t v = lo + int64_t(u * double(hi - lo + 1));
    return v > hi ? hi : v;
  }

  // Box-Muller without caching the second value, so draw order is obvious.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = int64_t(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(0, i);
      std::swap(v[size_t(i)], v[size_t(j)]);
    }
  }

  // n distinct values from [0, count), in draw order.
  std::vector<int> sample_without_replacement(int count, int n) {
    std::vector<int> pool(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) pool[size_t(i)] = i;
    shuffle(pool);
    pool.resize(size_t(n));
    return pool;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace umif
