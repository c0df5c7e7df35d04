#include "neuronscope/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "neuronscope/errors.hpp"
#include "neuronscope/rng.hpp"

namespace neuronscope {

namespace {

// Indices of the min(k, entries) largest-value entries; ties prefer the
// lower index.
std::vector<std::uint32_t> topk_indices(const SparseActivation& z,
                                        std::uint32_t k) {
  std::vector<std::pair<std::uint32_t, float>> es = z.entries;
  std::sort(es.begin(), es.end(), [](const auto& a, const auto& b) {
    return a.second > b.second ||
           (a.second == b.second && a.first < b.first);
  });
  if (es.size() > k) es.resize(k);
  std::vector<std::uint32_t> idx;
  idx.reserve(es.size());
  for (const auto& e : es) idx.push_back(e.first);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::string item_label(const EmbeddingMatrix& data, std::size_t i) {
  return data.has_ids() ? data.item_ids[i] : std::to_string(i);
}

}  // namespace

bool NeuronCatalog::is_always_on(std::uint32_t id) const {
  return std::binary_search(always_on.begin(), always_on.end(), id);
}

ActivationLedger build_ledger(const SaeModel& model,
                              const EmbeddingMatrix& data,
                              std::uint32_t k_record, LedgerLevel level) {
  if (data.dim != model.d) {
    throw ShapeError("data dim != model d");
  }
  if (k_record < 1) throw InvalidArgument("k_record must be >= 1");
  const std::uint32_t sparsity = std::max(model.k, k_record);
  ActivationLedger ledger;
  ledger.omega = model.omega;
  ledger.k_record = k_record;
  ledger.level = level;
  ledger.records.resize(data.count);
  for (std::size_t i = 0; i < data.count; ++i) {
    const auto z = encode_topk(model, data.row(i), sparsity);
    auto entries = z.entries;
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) {
                return a.second > b.second ||
                       (a.second == b.second && a.first < b.first);
              });
    if (entries.size() > k_record) entries.resize(k_record);
    ledger.records[i] = {item_label(data, i), std::move(entries)};
  }
  return ledger;
}

NeuronCatalog detect_always_on(const ActivationLedger& ledger,
                               double threshold) {
  if (ledger.records.empty()) {
    throw InvalidArgument("cannot detect always-on neurons on an empty ledger");
  }
  std::vector<std::uint64_t> counts(ledger.omega, 0);
  std::vector<double> value_sums(ledger.omega, 0.0);
  for (const auto& rec : ledger.records) {
    for (const auto& [idx, val] : rec.entries) {
      counts[idx] += 1;
      value_sums[idx] += val;
    }
  }
  NeuronCatalog cat;
  cat.omega = ledger.omega;
  cat.threshold = threshold;
  const double n = static_cast<double>(ledger.records.size());
  for (std::uint32_t i = 0; i < ledger.omega; ++i) {
    if (counts[i] == 0) continue;
    NeuronStats s;
    s.id = i;
    s.count = counts[i];
    s.appearance_fraction = static_cast<double>(counts[i]) / n;
    s.mean_active_value = value_sums[i] / static_cast<double>(counts[i]);
    if (s.appearance_fraction >= threshold) cat.always_on.push_back(i);
    cat.neurons.push_back(s);
  }
  return cat;
}

double change_ratio(const SparseActivation& za, const SparseActivation& zb,
                    std::uint32_t k) {
  if (k == 0) throw InvalidArgument("change ratio needs k >= 1");
  if (za.omega != zb.omega) {
    throw ShapeError("activations come from different latent widths");
  }
  const auto ia = topk_indices(za, k);
  const auto ib = topk_indices(zb, k);
  std::size_t overlap = 0;
  auto it = ib.begin();
  for (const auto i : ia) {
    while (it != ib.end() && *it < i) ++it;
    if (it != ib.end() && *it == i) ++overlap;
  }
  return 1.0 - static_cast<double>(overlap) / static_cast<double>(k);
}

std::vector<std::pair<std::uint32_t, double>> change_ratio_curve(
    const SaeModel& model, const EmbeddingMatrix& clean,
    const std::vector<std::uint32_t>& noise_steps,
    const NoiseSchedule& schedule, std::uint32_t k, std::uint64_t seed) {
  if (clean.count == 0) throw InvalidArgument("empty dataset");
  std::vector<SparseActivation> clean_codes(clean.count);
  for (std::size_t i = 0; i < clean.count; ++i) {
    clean_codes[i] = encode_topk(model, clean.row(i));
  }
  std::vector<std::pair<std::uint32_t, double>> curve;
  curve.reserve(noise_steps.size());
  for (const auto t : noise_steps) {
    double sum = 0.0;
    for (std::size_t i = 0; i < clean.count; ++i) {
      const auto noisy =
          perturb(clean.row(i), t, schedule, derive_seed(seed, i));
      const auto zb = encode_topk(model, noisy);
      sum += change_ratio(clean_codes[i], zb, k);
    }
    curve.emplace_back(t, sum / static_cast<double>(clean.count));
  }
  return curve;
}

std::vector<std::pair<std::string, float>> top_activating_items(
    const ActivationLedger& ledger, std::uint32_t neuron, std::size_t n) {
  if (neuron >= ledger.omega) {
    throw IndexError("neuron " + std::to_string(neuron) +
                     " out of range [0, " + std::to_string(ledger.omega) +
                     ")");
  }
  std::vector<std::pair<std::string, float>> hits;
  for (const auto& rec : ledger.records) {
    for (const auto& [idx, val] : rec.entries) {
      if (idx == neuron) {
        hits.emplace_back(rec.item, val);
        break;
      }
    }
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  if (hits.size() > n) hits.resize(n);
  return hits;
}

std::vector<NeuronLabel> classify_neurons(const NeuronCatalog& catalog,
                                          const ActivationLedger& ledger) {
  if (catalog.omega != ledger.omega) {
    throw ShapeError("catalog and ledger latent widths differ");
  }
  std::vector<NeuronLabel> labels(catalog.omega, NeuronLabel::inactive);
  for (const auto& s : catalog.neurons) {
    labels[s.id] = NeuronLabel::image_specific;
  }
  for (const auto id : catalog.always_on) labels[id] = NeuronLabel::always_on;
  return labels;
}

nlohmann::json analysis_to_json(const ActivationLedger& ledger,
                                const NeuronCatalog& catalog) {
  nlohmann::json j;
  j["omega"] = ledger.omega;
  j["k_record"] = ledger.k_record;
  j["level"] = ledger.level == LedgerLevel::image ? "image" : "patch";
  j["threshold"] = catalog.threshold;
  j["always_on"] = catalog.always_on;
  auto& neurons = j["neurons"] = nlohmann::json::array();
  for (const auto& s : catalog.neurons) {
    neurons.push_back({{"id", s.id},
                       {"appearance_fraction", s.appearance_fraction},
                       {"mean_active_value", s.mean_active_value},
                       {"count", s.count}});
  }
  auto& records = j["records"] = nlohmann::json::array();
  for (const auto& rec : ledger.records) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [idx, val] : rec.entries) {
      entries.push_back({idx, val});
    }
    records.push_back({{"item", rec.item}, {"entries", std::move(entries)}});
  }
  return j;
}

void write_analysis(const ActivationLedger& ledger,
                    const NeuronCatalog& catalog,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << analysis_to_json(ledger, catalog).dump(2) << '\n';
}

NeuronCatalog read_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile("bad catalog JSON " + path.string() + ": " + e.what());
  }
  if (!j.contains("omega") || !j.contains("always_on")) {
    throw FormatError(path.string() + ": catalog needs omega and always_on");
  }
  NeuronCatalog cat;
  cat.omega = j["omega"].get<std::uint32_t>();
  cat.threshold = j.value("threshold", 1.0);
  cat.always_on = j["always_on"].get<std::vector<std::uint32_t>>();
  std::sort(cat.always_on.begin(), cat.always_on.end());
  for (const auto id : cat.always_on) {
    if (id >= cat.omega) {
      throw InvalidValue("always_on id " + std::to_string(id) +
                         " out of range in " + path.string());
    }
  }
  if (j.contains("neurons")) {
    for (const auto& n : j["neurons"]) {
      NeuronStats s;
      s.id = n.at("id").get<std::uint32_t>();
      s.appearance_fraction = n.at("appearance_fraction").get<double>();
      s.mean_active_value = n.at("mean_active_value").get<double>();
      s.count = n.at("count").get<std::uint64_t>();
      cat.neurons.push_back(s);
    }
  }
  return cat;
}

}  // namespace neuronscope
