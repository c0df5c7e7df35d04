#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace neuronscope {

// Row-major dense matrix of f32 features; rows are items (or patches).
struct EmbeddingMatrix {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<float> values;          // count * dim
  std::vector<std::string> item_ids;  // empty, or one id per row

  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
  std::span<float> row(std::size_t i) {
    return {values.data() + i * dim, dim};
  }
  bool has_ids() const { return !item_ids.empty(); }

  // Throws ShapeError / InvalidValue when an invariant is broken:
  // dim >= 1, values.size() == count*dim, all values finite, ids unique.
  void validate() const;
};

struct PairedDataset {
  EmbeddingMatrix clean;
  EmbeddingMatrix noisy;
  std::uint32_t noise_step = 0;
};

// EMB1 container:
//   bytes 0-3   magic "EMB1"
//   u32 LE      version (1)
//   u64 LE      count
//   u32 LE      dim
//   u32 LE      flags, bit0 = ids sidecar present
//   f32 LE      count*dim values, row-major
// When bit0 is set, "<path>.ids.json" holds a JSON array of count strings.
//
// read_embeddings falls back to CSV when the magic is absent: one row per
// item, comma-separated decimals, optional leading id column when the first
// cell is non-numeric.
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingMatrix& m,
                      const std::filesystem::path& path);

PairedDataset make_pairs(EmbeddingMatrix clean, EmbeddingMatrix noisy,
                         std::uint32_t noise_step);

// batch_size rows drawn uniformly with replacement; pure in (m, batch_size,
// seed). The result carries no item ids (draws may repeat).
EmbeddingMatrix sample_batch(const EmbeddingMatrix& m, std::size_t batch_size,
                             std::uint64_t seed);

// Per-dimension mean over rows (zero vector for an empty matrix).
std::vector<float> column_mean(const EmbeddingMatrix& m);

}  // namespace neuronscope
