#pragma once

#include <cstddef>
#include <cmath>
#include <span>

namespace neuronscope {

// Dense kernels over f32 storage with f64 accumulation in a fixed order,
// so results are identical run to run regardless of threading.

inline double dot(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline double squared_norm(std::span<const float> a) { return dot(a, a); }

inline double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const float> a,
                               std::span<const float> b) {
  const std::size_t n = a.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

// cos(a, b); 0 when either vector is zero.
inline double cosine(std::span<const float> a, std::span<const float> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// y += alpha * x, accumulating into a double buffer.
inline void axpy(double alpha, std::span<const float> x, std::span<double> y) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace neuronscope
