#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace chartx {

// Error hierarchy. Every failure mode surfaces as one of these so the CLI
// can map them onto exit codes uniformly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};
struct LayoutError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct ExtractionError : Error {
  using Error::Error;
};

// Deterministic RNG. splitmix64 core so that streams are reproducible
// independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return (next_u64() >> 11) * (1.0 / 9007199254740992.0); }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw ConfigError("Rng::uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Standard normal via Box-Muller (only ever used for weight init).
  double normal() {
    double u1 = next_double(), u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    if (v.empty()) throw ConfigError("Rng::pick: empty set");
    return v[static_cast<size_t>(uniform_int(0, static_cast<int64_t>(v.size()) - 1))];
  }

  // Derive an independent stream; used for per-chart generation.
  static uint64_t derive(uint64_t seed, uint64_t index) {
    Rng r(seed ^ (0x2545f4914f6cdd1dULL * (index + 1)));
    r.next_u64();
    return r.next_u64();
  }

  void save_state(uint64_t& out) const { out = state_; }
  void restore_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

inline uint64_t env_thread_cap(unsigned hardware) {
  const char* v = std::getenv("CHARTX_THREADS");
  uint64_t cap = hardware == 0 ? 1 : hardware;
  if (v != nullptr) {
    char* end = nullptr;
    long n = std::strtol(v, &end, 10);
    if (end != v && n > 0) cap = static_cast<uint64_t>(n);
  }
  return cap;
}

}  // namespace chartx
