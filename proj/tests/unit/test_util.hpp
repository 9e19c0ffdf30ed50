#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lite/rng.hpp"
#include "lite/tensor.hpp"

namespace lite::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
  return Tensor::uniform(shape, lo, hi, rng, requires_grad);
}

// sum(f(...) * w) with a fixed random w, so every output coordinate carries
// a distinct gradient.
inline std::function<Tensor()> weighted_sum(std::function<Tensor()> f, Rng& rng) {
  const Tensor probe = f();
  const Tensor w = Tensor::uniform(probe.shape(), -1.0, 1.0, rng);
  return [f, w] { return sum(mul(f(), w)); };
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

inline std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace lite::testing
