#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "neuronscope/embedding.hpp"
#include "neuronscope/sae.hpp"

namespace nstest {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / ("neuronscope_test_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline neuronscope::EmbeddingMatrix make_matrix(
    std::size_t count, std::size_t dim, std::vector<float> values,
    std::vector<std::string> ids = {}) {
  neuronscope::EmbeddingMatrix m;
  m.count = count;
  m.dim = dim;
  m.values = std::move(values);
  m.item_ids = std::move(ids);
  return m;
}

// omega == d, identity encoder/decoder, zero biases, single group.
inline neuronscope::SaeModel identity_model(std::uint32_t d, std::uint32_t k) {
  neuronscope::SaeModel m;
  m.d = d;
  m.omega = d;
  m.k = k;
  m.groups = {d};
  m.w_enc.assign(static_cast<std::size_t>(d) * d, 0.0f);
  m.w_dec.assign(static_cast<std::size_t>(d) * d, 0.0f);
  for (std::uint32_t i = 0; i < d; ++i) {
    m.w_enc[static_cast<std::size_t>(i) * d + i] = 1.0f;
    m.w_dec[static_cast<std::size_t>(i) * d + i] = 1.0f;
  }
  m.b_enc.assign(d, 0.0f);
  m.b_dec.assign(d, 0.0f);
  return m;
}

inline neuronscope::SaeModel model_from_rows(
    std::uint32_t d, std::uint32_t k,
    const std::vector<std::vector<float>>& enc_rows,
    const std::vector<float>& b_enc,
    const std::vector<std::vector<float>>& dec_rows,
    const std::vector<float>& b_dec,
    std::vector<std::uint32_t> groups = {}) {
  neuronscope::SaeModel m;
  m.d = d;
  m.omega = static_cast<std::uint32_t>(enc_rows.size());
  m.k = k;
  m.groups = groups.empty() ? std::vector<std::uint32_t>{m.omega}
                            : std::move(groups);
  for (const auto& r : enc_rows) {
    m.w_enc.insert(m.w_enc.end(), r.begin(), r.end());
  }
  for (const auto& r : dec_rows) {
    m.w_dec.insert(m.w_dec.end(), r.begin(), r.end());
  }
  m.b_enc = b_enc;
  m.b_dec = b_dec;
  return m;
}

// Random small model with gaussian weights (not unit-normalized).
inline neuronscope::SaeModel random_model(std::uint32_t d, std::uint32_t omega,
                                          std::uint32_t k, std::uint64_t seed,
                                          std::vector<std::uint32_t> groups = {}) {
  neuronscope::SaeModel m;
  m.d = d;
  m.omega = omega;
  m.k = k;
  m.groups = groups.empty() ? std::vector<std::uint32_t>{omega}
                            : std::move(groups);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t wd = static_cast<std::size_t>(omega) * d;
  m.w_enc.resize(wd);
  m.w_dec.resize(wd);
  for (auto& x : m.w_enc) x = static_cast<float>(nd(gen) / std::sqrt(d));
  for (auto& x : m.w_dec) x = static_cast<float>(nd(gen) / std::sqrt(d));
  m.b_enc.resize(omega);
  m.b_dec.resize(d);
  for (auto& x : m.b_enc) x = static_cast<float>(0.05 * nd(gen));
  for (auto& x : m.b_dec) x = static_cast<float>(0.1 * nd(gen));
  return m;
}

inline neuronscope::EmbeddingMatrix random_matrix(std::size_t count,
                                                  std::size_t dim,
                                                  std::uint64_t seed,
                                                  double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  neuronscope::EmbeddingMatrix m;
  m.count = count;
  m.dim = dim;
  m.values.resize(count * dim);
  for (auto& x : m.values) x = static_cast<float>(nd(gen));
  return m;
}

// ---------------------------------------------------------------------------
// Independent double-precision reference for the batch-top-k matryoshka loss.
// Written from the operation contracts, not by calling the library forward
// path; serves as the finite-difference oracle for the gradient checks.
// ---------------------------------------------------------------------------

inline double reference_matryoshka_loss(const neuronscope::SaeModel& m,
                                        const neuronscope::EmbeddingMatrix& batch) {
  const std::size_t B = batch.count;
  const std::size_t d = m.d;
  const std::size_t omega = m.omega;

  // Pre-activations in double.
  std::vector<std::vector<double>> p(B, std::vector<double>(omega));
  for (std::size_t b = 0; b < B; ++b) {
    const auto v = batch.row(b);
    for (std::size_t i = 0; i < omega; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        acc += static_cast<double>(m.w_enc[i * d + j]) * v[j];
      }
      p[b][i] = acc - m.b_enc[i];
    }
  }
  // Batch-global selection of the K*B largest positive values; ties prefer
  // (lower sample, lower index).
  struct Cand {
    double value;
    std::size_t b, i;
  };
  std::vector<Cand> cands;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < omega; ++i) {
      if (p[b][i] > 0.0) cands.push_back({p[b][i], b, i});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& c) {
    if (a.value != c.value) return a.value > c.value;
    if (a.b != c.b) return a.b < c.b;
    return a.i < c.i;
  });
  const std::size_t budget = static_cast<std::size_t>(m.k) * B;
  if (cands.size() > budget) cands.resize(budget);
  std::vector<std::vector<double>> code(B, std::vector<double>(omega, 0.0));
  for (const auto& c : cands) code[c.b][c.i] = c.value;

  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto v = batch.row(b);
    for (const auto group : m.groups) {
      for (std::size_t j = 0; j < d; ++j) {
        double recon = m.b_dec[j];
        for (std::size_t i = 0; i < group; ++i) {
          if (code[b][i] != 0.0) {
            recon += code[b][i] * static_cast<double>(m.w_dec[i * d + j]);
          }
        }
        const double r = recon - v[j];
        total += r * r;
      }
    }
  }
  return total / (static_cast<double>(m.groups.size()) *
                  static_cast<double>(B) * static_cast<double>(d));
}

// Central finite difference of the reference loss w.r.t. one f32 parameter.
inline double central_difference(neuronscope::SaeModel& m, float& param,
                                 const neuronscope::EmbeddingMatrix& batch,
                                 double h) {
  const float saved = param;
  param = static_cast<float>(saved + h);
  const double hi = reference_matryoshka_loss(m, batch);
  const float up = param;
  param = static_cast<float>(saved - h);
  const double lo = reference_matryoshka_loss(m, batch);
  const float down = param;
  param = saved;
  return (hi - lo) / (static_cast<double>(up) - static_cast<double>(down));
}

// Max-norm relative error between two tensors.
inline double tensor_relative_error(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  double max_diff = 0.0;
  double max_mag = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
    max_mag = std::max({max_mag, std::abs(a[i]), std::abs(b[i])});
  }
  return max_diff / std::max(max_mag, 1e-8);
}

// ---------------------------------------------------------------------------
// Minimal JSON-schema checker (type / properties / required / items / enum),
// enough to validate the shipped schemas against emitted documents.
// ---------------------------------------------------------------------------

inline void schema_check(const nlohmann::json& schema,
                         const nlohmann::json& value, const std::string& where,
                         std::vector<std::string>& errors) {
  if (schema.contains("type")) {
    const auto type = schema["type"].get<std::string>();
    const bool ok =
        (type == "object" && value.is_object()) ||
        (type == "array" && value.is_array()) ||
        (type == "string" && value.is_string()) ||
        (type == "number" && value.is_number()) ||
        (type == "integer" && value.is_number_integer()) ||
        (type == "boolean" && value.is_boolean()) ||
        (type == "null" && value.is_null());
    if (!ok) {
      errors.push_back(where + ": expected " + type + ", got " +
                       std::string(value.type_name()));
      return;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) {
      if (e == value) found = true;
    }
    if (!found) errors.push_back(where + ": value not in enum");
  }
  if (schema.contains("required")) {
    for (const auto& key : schema["required"]) {
      if (!value.contains(key.get<std::string>())) {
        errors.push_back(where + ": missing required key '" +
                         key.get<std::string>() + "'");
      }
    }
  }
  if (schema.contains("properties") && value.is_object()) {
    for (const auto& [key, sub] : schema["properties"].items()) {
      if (value.contains(key)) {
        schema_check(sub, value[key], where + "." + key, errors);
      }
    }
  }
  if (schema.contains("items") && value.is_array()) {
    std::size_t idx = 0;
    for (const auto& item : value) {
      schema_check(schema["items"], item,
                   where + "[" + std::to_string(idx++) + "]", errors);
    }
  }
}

inline std::vector<std::string> validate_against_schema(
    const std::filesystem::path& schema_path, const nlohmann::json& value) {
  std::ifstream in(schema_path);
  nlohmann::json schema;
  in >> schema;
  std::vector<std::string> errors;
  schema_check(schema, value, "$", errors);
  return errors;
}

}  // namespace nstest
