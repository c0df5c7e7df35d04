#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "neuronscope/embedding.hpp"

namespace neuronscope {

// Forward noising schedule: linear betas, alpha_bar_t = prod_{s<=t}(1-beta_s)
// with alpha_bar_0 = 1. Cumulative products are taken in double.
struct NoiseSchedule {
  std::uint32_t total_steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;       // beta_1..beta_T
  std::vector<double> alpha_bars;  // alpha_bar_0..alpha_bar_T (size T+1)

  double alpha_bar(std::uint32_t t) const { return alpha_bars[t]; }
};

NoiseSchedule build_schedule(std::uint32_t total_steps, double beta_start,
                             double beta_end);

inline NoiseSchedule default_schedule() {
  return build_schedule(1000, 1e-4, 2e-2);
}

// v' = sqrt(alpha_bar_t) * v + sqrt(1 - alpha_bar_t) * eps with per-component
// standard Gaussian eps; pure in (v, t, schedule, seed). t = 0 returns v.
std::vector<float> perturb(std::span<const float> v, std::uint32_t t,
                           const NoiseSchedule& schedule, std::uint64_t seed);

// Row-wise perturbation with per-row derived seeds, so the result does not
// depend on evaluation order.
EmbeddingMatrix perturb_matrix(const EmbeddingMatrix& m, std::uint32_t t,
                               const NoiseSchedule& schedule,
                               std::uint64_t seed);

}  // namespace neuronscope
