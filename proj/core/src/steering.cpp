#include "neuronscope/steering.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "neuronscope/errors.hpp"

namespace neuronscope {

void SteeringPlan::validate(std::uint32_t omega) const {
  if (lambda < 0.0) throw InvalidArgument("lambda must be >= 0");
  std::unordered_set<std::uint32_t> seen;
  for (const auto& e : edits) {
    if (e.neuron >= omega) {
      throw IndexError("edit targets neuron " + std::to_string(e.neuron) +
                       " >= omega = " + std::to_string(omega));
    }
    if (!seen.insert(e.neuron).second) {
      throw InvalidArgument("duplicate edit for neuron " +
                            std::to_string(e.neuron));
    }
  }
}

SparseActivation apply_edits(const SparseActivation& z,
                             const SteeringPlan& plan) {
  plan.validate(z.omega);
  if (plan.edits.empty()) return z;
  SparseActivation out = z;
  for (const auto& e : plan.edits) {
    auto it = std::lower_bound(
        out.entries.begin(), out.entries.end(), e.neuron,
        [](const auto& ent, std::uint32_t key) { return ent.first < key; });
    const bool present = it != out.entries.end() && it->first == e.neuron;
    const float current = present ? it->second : 0.0f;
    const float next =
        e.mode == EditMode::set ? e.weight : current + e.weight;
    if (next > 0.0f) {
      if (present) {
        it->second = next;
      } else {
        out.entries.insert(it, {e.neuron, next});
      }
    } else if (present) {
      out.entries.erase(it);
    }
  }
  return out;
}

SparseActivation zero_neurons(const SparseActivation& z,
                              std::span<const std::uint32_t> ids) {
  std::unordered_set<std::uint32_t> kill(ids.begin(), ids.end());
  for (const auto id : kill) {
    if (id >= z.omega) {
      throw IndexError("zeroed neuron " + std::to_string(id) +
                       " out of range");
    }
  }
  SparseActivation out;
  out.omega = z.omega;
  out.entries.reserve(z.entries.size());
  for (const auto& e : z.entries) {
    if (!kill.count(e.first)) out.entries.push_back(e);
  }
  return out;
}

DenseActivation contrastive_delta(const SparseActivation& z_clean,
                                  const SparseActivation& z_noisy) {
  if (z_clean.omega != z_noisy.omega) {
    throw ShapeError("activations come from different latent widths");
  }
  DenseActivation delta;
  delta.omega = z_clean.omega;
  delta.values.assign(z_clean.omega, 0.0f);
  for (const auto& [i, a] : z_clean.entries) delta.values[i] += a;
  for (const auto& [i, a] : z_noisy.entries) delta.values[i] -= a;
  return delta;
}

DenseActivation apply_ans(DenseActivation delta,
                          std::span<const std::uint32_t> always_on) {
  for (const auto id : always_on) {
    if (id >= delta.omega) {
      throw IndexError("always-on id " + std::to_string(id) +
                       " out of range");
    }
    delta.values[id] = 0.0f;
  }
  return delta;
}

DenseActivation cns_steer(const SparseActivation& z_clean,
                          const DenseActivation& delta, double lambda) {
  if (z_clean.omega != delta.omega) {
    throw ShapeError("code and delta latent widths differ");
  }
  if (lambda < 0.0) throw InvalidArgument("lambda must be >= 0");
  DenseActivation out;
  out.omega = delta.omega;
  out.values.assign(delta.omega, 0.0f);
  for (const auto& [i, a] : z_clean.entries) out.values[i] = a;
  if (lambda != 0.0) {
    for (std::uint32_t i = 0; i < delta.omega; ++i) {
      if (delta.values[i] != 0.0f) {
        out.values[i] = static_cast<float>(out.values[i] +
                                           lambda * delta.values[i]);
      }
    }
  }
  return out;
}

std::vector<float> cns_pipeline(const SaeModel& model,
                                std::span<const float> v_clean,
                                std::span<const float> v_noisy,
                                const NeuronCatalog& catalog,
                                const SteeringPlan& plan) {
  if (catalog.omega != model.omega) {
    throw ShapeError("catalog latent width != model omega");
  }
  const auto z_clean = apply_edits(encode_topk(model, v_clean), plan);
  const auto z_noisy = encode_topk(model, v_noisy);
  const auto delta =
      apply_ans(contrastive_delta(z_clean, z_noisy), catalog.always_on);
  const auto steered = cns_steer(z_clean, delta, plan.lambda);
  return decode_dense(model, steered.values);
}

SteeringPlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile("bad plan JSON " + path.string() + ": " + e.what());
  }
  SteeringPlan plan;
  plan.lambda = j.value("lambda", 1.0);
  plan.noise_step = j.value("noise_step", 500u);
  if (j.contains("edits")) {
    for (const auto& e : j["edits"]) {
      NeuronEdit edit;
      edit.neuron = e.at("neuron").get<std::uint32_t>();
      const auto mode = e.at("mode").get<std::string>();
      if (mode == "set") {
        edit.mode = EditMode::set;
      } else if (mode == "add") {
        edit.mode = EditMode::add;
      } else {
        throw FormatError("edit mode must be 'set' or 'add', got '" + mode +
                          "'");
      }
      edit.weight = e.at("weight").get<float>();
      plan.edits.push_back(edit);
    }
  }
  return plan;
}

nlohmann::json plan_to_json(const SteeringPlan& plan) {
  nlohmann::json edits = nlohmann::json::array();
  for (const auto& e : plan.edits) {
    edits.push_back({{"neuron", e.neuron},
                     {"mode", e.mode == EditMode::set ? "set" : "add"},
                     {"weight", e.weight}});
  }
  return {{"edits", std::move(edits)},
          {"lambda", plan.lambda},
          {"noise_step", plan.noise_step}};
}

}  // namespace neuronscope
