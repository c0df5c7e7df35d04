#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "neuronscope/analysis.hpp"
#include "neuronscope/sae.hpp"

namespace neuronscope {

enum class EditMode { set, add };

struct NeuronEdit {
  std::uint32_t neuron = 0;
  EditMode mode = EditMode::set;
  float weight = 0.0f;
};

// Manual per-neuron interventions plus the contrastive-steering parameters.
struct SteeringPlan {
  std::vector<NeuronEdit> edits;  // unique neuron ids
  double lambda = 1.0;
  std::uint32_t noise_step = 500;

  void validate(std::uint32_t omega) const;
};

// Dense latent vector; entries may be negative (used for deltas and for the
// steered code).
struct DenseActivation {
  std::uint32_t omega = 0;
  std::vector<float> values;
};

// set: replace (or insert) the neuron's value with the edit weight.
// add: add the weight to the current value (0 when absent).
// Entries that end up <= 0 are dropped.
SparseActivation apply_edits(const SparseActivation& z,
                             const SteeringPlan& plan);

SparseActivation zero_neurons(const SparseActivation& z,
                              std::span<const std::uint32_t> ids);

// delta[i] = z_clean[i] - z_noisy[i], absent entries count as zero.
DenseActivation contrastive_delta(const SparseActivation& z_clean,
                                  const SparseActivation& z_noisy);

// Always-on suppression: zero the delta on every id in always_on.
DenseActivation apply_ans(DenseActivation delta,
                          std::span<const std::uint32_t> always_on);

// z_tilde = z_clean + lambda * delta, kept dense and unclamped.
DenseActivation cns_steer(const SparseActivation& z_clean,
                          const DenseActivation& delta, double lambda);

// Full pipeline on one (clean, noisy) embedding pair: encode both, apply any
// manual edits to the clean code, form the suppressed contrastive delta,
// steer, and decode the dense result.
std::vector<float> cns_pipeline(const SaeModel& model,
                                std::span<const float> v_clean,
                                std::span<const float> v_noisy,
                                const NeuronCatalog& catalog,
                                const SteeringPlan& plan);

// Plan JSON: {"edits":[{"neuron":i,"mode":"set"|"add","weight":w}, ...],
//             "lambda": l, "noise_step": t}; all keys optional.
SteeringPlan read_plan(const std::filesystem::path& path);
nlohmann::json plan_to_json(const SteeringPlan& plan);

}  // namespace neuronscope
