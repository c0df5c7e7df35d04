#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "neuronscope/embedding.hpp"

namespace neuronscope {

// Sparse latent code z(v): at most K (index, value) pairs when produced by
// top-k encoding. Indices are unique and ascending, values strictly positive.
struct SparseActivation {
  std::uint32_t omega = 0;
  std::vector<std::pair<std::uint32_t, float>> entries;

  bool empty() const { return entries.empty(); }
  // Value at index i, 0 when absent.
  float value_at(std::uint32_t i) const;
};

// Two-linear-map autoencoder with top-k sparsity and nested (matryoshka)
// prefix groups. Row i of w_dec is the dictionary atom of neuron i.
struct SaeModel {
  std::uint32_t d = 0;
  std::uint32_t omega = 0;
  std::uint32_t k = 0;
  std::vector<std::uint32_t> groups;  // ascending, last == omega
  std::vector<float> w_enc;           // omega x d, row-major
  std::vector<float> b_enc;           // omega
  std::vector<float> w_dec;           // omega x d, row-major
  std::vector<float> b_dec;           // d

  std::span<const float> enc_row(std::uint32_t i) const {
    return {w_enc.data() + static_cast<std::size_t>(i) * d, d};
  }
  std::span<float> enc_row(std::uint32_t i) {
    return {w_enc.data() + static_cast<std::size_t>(i) * d, d};
  }
  std::span<const float> dec_row(std::uint32_t i) const {
    return {w_dec.data() + static_cast<std::size_t>(i) * d, d};
  }
  std::span<float> dec_row(std::uint32_t i) {
    return {w_dec.data() + static_cast<std::size_t>(i) * d, d};
  }

  void validate() const;

  // Scales every decoder row to unit L2 norm. Rows that are exactly zero are
  // re-drawn as deterministic pseudo-random unit directions; returns how many
  // were re-drawn.
  std::size_t normalize_decoder();
};

// Raw pre-activations w_enc. v - b_enc (no ReLU), written into `out`.
void pre_activations(const SaeModel& model, std::span<const float> v,
                     std::span<float> out);

// The K largest strictly-positive pre-activations; ties prefer the lower
// index. Fewer than K entries when fewer are positive.
SparseActivation encode_topk(const SaeModel& model, std::span<const float> v);
SparseActivation encode_topk(const SaeModel& model, std::span<const float> v,
                             std::uint32_t k);

// Threshold-mode inference: keeps every pre-activation strictly above
// max(threshold, 0); entry count is unbounded.
SparseActivation encode_threshold(const SaeModel& model,
                                  std::span<const float> v, float threshold);

// Batch-global selection: the K*B largest strictly-positive pre-activations
// across the whole batch, so one sample may keep more or fewer than K.
// Ties prefer (lower sample, lower index). With B == 1 this coincides with
// encode_topk.
std::vector<SparseActivation> encode_batch_topk(const SaeModel& model,
                                                const EmbeddingMatrix& batch,
                                                unsigned threads = 1);

// sum_{(i,a) in z} a * w_dec[i,:] + b_dec
std::vector<float> decode(const SaeModel& model, const SparseActivation& z);

// decode using only entries with index < m; m must be one of model.groups.
std::vector<float> decode_prefix(const SaeModel& model,
                                 const SparseActivation& z, std::uint32_t m);

// Linear extension of decode to a dense (possibly signed) code.
std::vector<float> decode_dense(const SaeModel& model,
                                std::span<const float> code);

// ||v - decode(encode_topk(v))||^2 / d
double reconstruction_error(const SaeModel& model, std::span<const float> v);

// SAE1 checkpoint:
//   magic "SAE1", u32 LE version (1), u32 d, u32 omega, u32 K,
//   u32 group count g, g x u32 group sizes,
//   then f32 LE blocks: w_enc (omega x d), b_enc, w_dec (omega x d), b_dec.
void save_model(const SaeModel& model, const std::filesystem::path& path);
SaeModel load_model(const std::filesystem::path& path);

}  // namespace neuronscope
