#pragma once

// Seeded random grid functions. Each consumer derives an independent
// stream from (seed, stream id) so trial results do not depend on
// evaluation order; doubles are produced from raw engine output to keep
// reports bit-identical across standard library implementations.

#include <cstdint>
#include <random>
#include <vector>

#include "sdde/grid_function.hpp"

namespace sdde {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  static Rng stream(std::uint64_t seed, std::uint64_t id) {
    // splitmix64 of the pair; decorrelates neighbouring ids
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

  std::uint64_t next_u64() { return eng_(); }

  double uniform() {  // [0,1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::mt19937_64 eng_;
};

// Nodal values i.i.d. uniform [-amp, amp].
inline GridFunction random_nodal(double a, double b, double dt, int n,
                                 double amp, Rng& rng) {
  const auto m = static_cast<long>(std::llround((b - a) / dt));
  std::vector<double> vals(static_cast<size_t>(m + 1) * n);
  for (auto& v : vals) v = rng.uniform(-amp, amp);
  return GridFunction::make(a, b, dt, std::move(vals), n);
}

// Random piecewise-linear walk: start uniform, slopes uniform [-smax, smax].
inline GridFunction random_slope_walk(double a, double b, double dt, int n,
                                      double start_amp, double smax, Rng& rng) {
  const auto m = static_cast<long>(std::llround((b - a) / dt));
  std::vector<double> vals(static_cast<size_t>(m + 1) * n);
  for (int j = 0; j < n; ++j) vals[j] = rng.uniform(-start_amp, start_amp);
  for (long i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      vals[(i + 1) * n + j] = vals[i * n + j] + dt * rng.uniform(-smax, smax);
  return GridFunction::make(a, b, dt, std::move(vals), n);
}

// Single nonzero node (hat function) at the given node index.
inline GridFunction spike(double a, double b, double dt, int n, int node,
                          double amp) {
  const auto m = static_cast<long>(std::llround((b - a) / dt));
  std::vector<double> vals(static_cast<size_t>(m + 1) * n, 0.0);
  for (int j = 0; j < n; ++j) vals[static_cast<size_t>(node) * n + j] = amp;
  return GridFunction::make(a, b, dt, std::move(vals), n);
}

// exp(rate * t) sampled at the nodes (scalar).
inline GridFunction sampled_exponential(double a, double b, double dt,
                                        double rate) {
  const auto m = static_cast<long>(std::llround((b - a) / dt));
  std::vector<double> vals(static_cast<size_t>(m + 1));
  for (long i = 0; i <= m; ++i) vals[i] = std::exp(rate * (a + i * dt));
  return GridFunction::make(a, b, dt, std::move(vals), 1);
}

// Member of { slopes bounded by beta } by construction: slopes drawn in the
// cube inscribed in the beta-ball.
inline GridFunction random_vbeta_window(double h, double dt, int n, double beta,
                                        double start_amp, Rng& rng) {
  const double s = beta / std::sqrt(static_cast<double>(n));
  return random_slope_walk(-h, 0.0, dt, n, start_amp, s, rng);
}

}  // namespace sdde
