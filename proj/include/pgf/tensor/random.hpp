#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "pgf/tensor/tensor.hpp"

namespace pgf {

// Seeded generator with platform-independent uniform and normal draws.
// The full state round-trips through state()/restore().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; no cached second value.
  double normal();

  template <typename T>
  Tensor<T> normal_tensor(Shape shape, double stddev = 1.0) {
    Tensor<T> out(std::move(shape));
    for (auto& v : out.data()) v = static_cast<T>(normal() * stddev);
    return out;
  }
  template <typename T>
  Tensor<T> uniform_tensor(Shape shape, double lo, double hi) {
    Tensor<T> out(std::move(shape));
    for (auto& v : out.data()) v = static_cast<T>(uniform(lo, hi));
    return out;
  }

  std::string state() const;
  void restore(const std::string& state);

  // Derives an independent seed from a base seed and a stream tag.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace pgf
