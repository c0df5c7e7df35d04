#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "neuronscope/embedding.hpp"
#include "neuronscope/rng.hpp"
#include "neuronscope/sae.hpp"

namespace neuronscope {

inline double default_learning_rate(std::uint32_t omega) {
  return 16.0 / (125.0 * std::sqrt(static_cast<double>(omega)));
}

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool update_decoder_bias = true;
};

// How the decoder bias behaves during training. `trained` is the normal
// free-bias setup (init = data mean, updated by Adam). `frozen` keeps the
// data-mean init fixed. `zero` pins it at 0, which stops the bias from
// absorbing constant data components; the synthetic oracle trains this way so
// the planted always-on structure stays visible as latents.
enum class DecoderBiasMode { trained, frozen, zero };

struct TrainConfig {
  std::uint32_t k = 20;
  std::uint32_t expansion_factor = 64;
  std::vector<double> group_fractions = {0.0625, 0.1875, 0.4375, 1.0};
  std::uint64_t steps = 100000;
  std::size_t batch_size = 4096;
  double lr = 0.0;  // <= 0 means 16 / (125 * sqrt(omega))
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::uint64_t dead_neuron_window = 10000;
  DecoderBiasMode decoder_bias = DecoderBiasMode::trained;
  unsigned threads = 1;

  void validate() const;
  AdamParams adam_params(std::uint32_t omega) const;
};

struct TrainReport {
  std::vector<std::pair<std::uint64_t, double>> loss_curve;
  double final_loss = 0.0;
  std::uint64_t dead_neuron_count = 0;
  double wall_clock_seconds = 0.0;
  // Running mean of the smallest kept activation per training batch; usable
  // as the cut for threshold-mode inference.
  double batch_topk_threshold = 0.0;
};

// Gradients and Adam moments are kept in double; parameters stay f32.
struct Gradients {
  std::vector<double> w_enc, b_enc, w_dec, b_dec;

  static Gradients zeros_like(const SaeModel& model);
};

struct AdamState {
  std::vector<double> m_w_enc, v_w_enc;
  std::vector<double> m_b_enc, v_b_enc;
  std::vector<double> m_w_dec, v_w_dec;
  std::vector<double> m_b_dec, v_b_dec;
  std::uint64_t step = 0;

  static AdamState zeros_like(const SaeModel& model);
};

// round(fraction * omega) per fraction; validates the result is strictly
// ascending, positive, and ends at omega.
std::vector<std::uint32_t> compute_groups(std::span<const double> fractions,
                                          std::uint32_t omega);

// omega = expansion_factor * d; decoder rows are gaussian directions scaled
// by 1/sqrt(d) then unit-normalized; encoder starts as the decoder transpose;
// b_enc = 0; b_dec = data_mean.
SaeModel init_model(std::uint32_t d, const TrainConfig& cfg,
                    std::span<const float> data_mean);

// (1/|M|) * mean over the batch of ||v - decode_prefix(z, m)||^2 / d, with z
// from batch-global top-k encoding.
double matryoshka_loss(const SaeModel& model, const EmbeddingMatrix& batch,
                       unsigned threads = 1);

// Exact gradients of matryoshka_loss with the top-k selection treated as a
// constant mask: gradient flows only through selected entries.
Gradients grad_loss(const SaeModel& model, const EmbeddingMatrix& batch,
                    unsigned threads = 1);

// Bias-corrected Adam update, then decoder rows are re-normalized to the unit
// sphere and each row's first moment is projected orthogonal to its atom.
void adam_step(SaeModel& model, const Gradients& grads, AdamState& state,
               const AdamParams& params);

// Re-draws latents with zero activations in the window: new unit-gaussian
// decoder row, encoder row = 0.1 * atom, b_enc = 0, Adam moments cleared.
// Returns the number of re-drawn latents.
std::size_t dead_neuron_sweep(SaeModel& model,
                              std::span<const std::uint64_t> counts, Rng& rng,
                              AdamState* state = nullptr);

// Called at every recorded-loss step (step 1, multiples of 100, final step).
using TrainProgressFn =
    std::function<void(std::uint64_t step, const SaeModel& model,
                       double loss)>;

std::pair<SaeModel, TrainReport> train(const EmbeddingMatrix& data,
                                       const TrainConfig& cfg,
                                       const TrainProgressFn& on_progress = {});

}  // namespace neuronscope
