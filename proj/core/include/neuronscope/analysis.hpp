#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "neuronscope/embedding.hpp"
#include "neuronscope/noise.hpp"
#include "neuronscope/sae.hpp"

namespace neuronscope {

enum class LedgerLevel { image, patch };

// One row's strongest recorded activations, sorted by descending value.
struct LedgerRecord {
  std::string item;
  std::vector<std::pair<std::uint32_t, float>> entries;
};

struct ActivationLedger {
  std::uint32_t omega = 0;
  std::uint32_t k_record = 20;
  LedgerLevel level = LedgerLevel::image;
  std::vector<LedgerRecord> records;
};

struct NeuronStats {
  std::uint32_t id = 0;
  double appearance_fraction = 0.0;
  double mean_active_value = 0.0;
  std::uint64_t count = 0;
};

struct NeuronCatalog {
  std::uint32_t omega = 0;
  double threshold = 1.0;
  std::vector<std::uint32_t> always_on;  // sorted
  std::vector<NeuronStats> neurons;      // neurons appearing at least once

  bool is_always_on(std::uint32_t id) const;
};

enum class NeuronLabel { always_on, image_specific, inactive };

// Encodes every row with per-sample top-k at sparsity max(model.k, k_record)
// and records the k_record strongest entries per row.
ActivationLedger build_ledger(const SaeModel& model,
                              const EmbeddingMatrix& data,
                              std::uint32_t k_record = 20,
                              LedgerLevel level = LedgerLevel::image);

// Always-on set = neurons whose appearance fraction over records reaches the
// threshold (1.0 = present in every record).
NeuronCatalog detect_always_on(const ActivationLedger& ledger,
                               double threshold = 1.0);

// Top-k change ratio between two codes from the same model:
// 1 - |topk(za) & topk(zb)| / k, where topk takes the min(k, available)
// largest-value indices and the denominator stays k.
double change_ratio(const SparseActivation& za, const SparseActivation& zb,
                    std::uint32_t k);

// Mean change ratio between each clean row and its noised counterpart, for
// every t in noise_steps. One noise draw per (seed, row), shared across t.
std::vector<std::pair<std::uint32_t, double>> change_ratio_curve(
    const SaeModel& model, const EmbeddingMatrix& clean,
    const std::vector<std::uint32_t>& noise_steps,
    const NoiseSchedule& schedule, std::uint32_t k, std::uint64_t seed);

// The n items with the largest recorded activation of a neuron, descending;
// fewer when the neuron appears in fewer records.
std::vector<std::pair<std::string, float>> top_activating_items(
    const ActivationLedger& ledger, std::uint32_t neuron, std::size_t n);

// Per-neuron label over [0, omega); the three labels partition the range.
std::vector<NeuronLabel> classify_neurons(const NeuronCatalog& catalog,
                                          const ActivationLedger& ledger);

// Combined catalog + ledger document:
// {omega, k_record, level, threshold, always_on:[...],
//  neurons:[{id, appearance_fraction, mean_active_value, count}],
//  records:[{item, entries:[[index,value],...]}]}
nlohmann::json analysis_to_json(const ActivationLedger& ledger,
                                const NeuronCatalog& catalog);
void write_analysis(const ActivationLedger& ledger,
                    const NeuronCatalog& catalog,
                    const std::filesystem::path& path);

// Reads back at least {omega, always_on} (records/neurons optional), e.g.
// for feeding a catalog into the steering pipeline.
NeuronCatalog read_catalog(const std::filesystem::path& path);

}  // namespace neuronscope
