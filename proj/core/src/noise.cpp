#include "neuronscope/noise.hpp"

#include <cmath>

#include "neuronscope/errors.hpp"
#include "neuronscope/rng.hpp"

namespace neuronscope {

NoiseSchedule build_schedule(std::uint32_t total_steps, double beta_start,
                             double beta_end) {
  if (total_steps < 1) throw InvalidArgument("schedule needs at least 1 step");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw InvalidArgument("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.total_steps = total_steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(total_steps);
  s.alpha_bars.resize(total_steps + 1);
  s.alpha_bars[0] = 1.0;
  double prod = 1.0;
  for (std::uint32_t t = 0; t < total_steps; ++t) {
    const double frac =
        total_steps == 1
            ? 0.0
            : static_cast<double>(t) / static_cast<double>(total_steps - 1);
    s.betas[t] = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - s.betas[t];
    s.alpha_bars[t + 1] = prod;
  }
  return s;
}

std::vector<float> perturb(std::span<const float> v, std::uint32_t t,
                           const NoiseSchedule& schedule, std::uint64_t seed) {
  if (t > schedule.total_steps) {
    throw InvalidArgument("noise step " + std::to_string(t) +
                          " beyond schedule end " +
                          std::to_string(schedule.total_steps));
  }
  std::vector<float> out(v.size());
  if (t == 0) {
    for (std::size_t j = 0; j < v.size(); ++j) out[j] = v[j];
    return out;
  }
  const double ab = schedule.alpha_bar(t);
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  Rng rng(seed);
  for (std::size_t j = 0; j < v.size(); ++j) {
    out[j] = static_cast<float>(signal * v[j] + noise * rng.gaussian());
  }
  return out;
}

EmbeddingMatrix perturb_matrix(const EmbeddingMatrix& m, std::uint32_t t,
                               const NoiseSchedule& schedule,
                               std::uint64_t seed) {
  EmbeddingMatrix out;
  out.count = m.count;
  out.dim = m.dim;
  out.item_ids = m.item_ids;
  out.values.resize(m.values.size());
  for (std::size_t i = 0; i < m.count; ++i) {
    const auto noisy = perturb(m.row(i), t, schedule, derive_seed(seed, i));
    std::copy(noisy.begin(), noisy.end(), out.values.begin() + i * m.dim);
  }
  return out;
}

}  // namespace neuronscope
