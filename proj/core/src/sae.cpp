#include "neuronscope/sae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "neuronscope/errors.hpp"
#include "neuronscope/linalg.hpp"
#include "neuronscope/parallel.hpp"
#include "neuronscope/rng.hpp"

namespace neuronscope {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'E', '1'};
constexpr std::uint32_t kVersion = 1;
// Salt for deterministic re-draw of zero decoder rows.
constexpr std::uint64_t kReseedSalt = 0x6e736372u;

// Keeps the k largest strictly-positive values of p; ties prefer the lower
// index. Result sorted ascending by index.
std::vector<std::pair<std::uint32_t, float>> top_k_positive(
    std::span<const float> p, std::uint32_t k) {
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0f) idx.push_back(i);
  }
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    return p[a] > p[b] || (p[a] == p[b] && a < b);
  };
  if (idx.size() > k) {
    std::nth_element(idx.begin(), idx.begin() + k, idx.end(), better);
    idx.resize(k);
  }
  std::sort(idx.begin(), idx.end());
  std::vector<std::pair<std::uint32_t, float>> entries;
  entries.reserve(idx.size());
  for (const auto i : idx) entries.emplace_back(i, p[i]);
  return entries;
}

void check_input(const SaeModel& model, std::span<const float> v) {
  if (v.size() != model.d) {
    throw ShapeError("input length " + std::to_string(v.size()) +
                     " != model d = " + std::to_string(model.d));
  }
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_block(std::ofstream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::uint32_t get_u32(std::ifstream& in, const std::filesystem::path& path) {
  std::uint32_t v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw CorruptFile("truncated header in " + path.string());
  return v;
}

void get_block(std::ifstream& in, std::vector<float>& v, std::size_t n,
               const std::filesystem::path& path) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(float)) {
    throw CorruptFile("truncated weight block in " + path.string());
  }
}

}  // namespace

float SparseActivation::value_at(std::uint32_t i) const {
  const auto it = std::lower_bound(
      entries.begin(), entries.end(), i,
      [](const auto& e, std::uint32_t key) { return e.first < key; });
  if (it != entries.end() && it->first == i) return it->second;
  return 0.0f;
}

void SaeModel::validate() const {
  if (d == 0 || omega == 0) throw ShapeError("d and omega must be positive");
  if (k == 0 || k > omega) {
    throw InvalidArgument("k must be in [1, omega], got " + std::to_string(k));
  }
  if (w_enc.size() != static_cast<std::size_t>(omega) * d ||
      w_dec.size() != static_cast<std::size_t>(omega) * d ||
      b_enc.size() != omega || b_dec.size() != d) {
    throw ShapeError("weight buffer sizes inconsistent with d/omega");
  }
  if (groups.empty() || groups.back() != omega) {
    throw InvalidArgument("groups must end at omega");
  }
  std::uint32_t prev = 0;
  for (const auto g : groups) {
    if (g <= prev || g > omega) {
      throw InvalidArgument("groups must be strictly ascending and <= omega");
    }
    prev = g;
  }
  const auto finite = [](const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(),
                       [](float x) { return std::isfinite(x); });
  };
  if (!finite(w_enc) || !finite(b_enc) || !finite(w_dec) || !finite(b_dec)) {
    throw InvalidValue("non-finite model weight");
  }
}

std::size_t SaeModel::normalize_decoder() {
  std::size_t reseeded = 0;
  for (std::uint32_t i = 0; i < omega; ++i) {
    auto row = dec_row(i);
    const double n = norm(row);
    if (n == 0.0) {
      Rng rng(derive_seed(kReseedSalt, i));
      double sq = 0.0;
      std::vector<double> dir(d);
      for (auto& x : dir) {
        x = rng.gaussian();
        sq += x * x;
      }
      const double inv = 1.0 / std::sqrt(sq);
      for (std::uint32_t j = 0; j < d; ++j) {
        row[j] = static_cast<float>(dir[j] * inv);
      }
      ++reseeded;
    } else {
      const double inv = 1.0 / n;
      for (auto& x : row) x = static_cast<float>(x * inv);
    }
  }
  return reseeded;
}

void pre_activations(const SaeModel& model, std::span<const float> v,
                     std::span<float> out) {
  check_input(model, v);
  for (std::uint32_t i = 0; i < model.omega; ++i) {
    out[i] = static_cast<float>(dot(model.enc_row(i), v) - model.b_enc[i]);
  }
}

SparseActivation encode_topk(const SaeModel& model, std::span<const float> v) {
  return encode_topk(model, v, model.k);
}

SparseActivation encode_topk(const SaeModel& model, std::span<const float> v,
                             std::uint32_t k) {
  std::vector<float> p(model.omega);
  pre_activations(model, v, p);
  SparseActivation z;
  z.omega = model.omega;
  z.entries = top_k_positive(p, k);
  return z;
}

SparseActivation encode_threshold(const SaeModel& model,
                                  std::span<const float> v, float threshold) {
  std::vector<float> p(model.omega);
  pre_activations(model, v, p);
  const float cut = std::max(threshold, 0.0f);
  SparseActivation z;
  z.omega = model.omega;
  for (std::uint32_t i = 0; i < model.omega; ++i) {
    if (p[i] > cut) z.entries.emplace_back(i, p[i]);
  }
  return z;
}

std::vector<SparseActivation> encode_batch_topk(const SaeModel& model,
                                                const EmbeddingMatrix& batch,
                                                unsigned threads) {
  if (batch.dim != model.d) {
    throw ShapeError("batch dim " + std::to_string(batch.dim) +
                     " != model d = " + std::to_string(model.d));
  }
  if (batch.count == 0) throw InvalidArgument("empty batch");
  const std::size_t B = batch.count;
  const std::size_t omega = model.omega;
  std::vector<float> p(B * omega);
  parallel_for(B, threads, [&](std::size_t s) {
    pre_activations(model, batch.row(s), {p.data() + s * omega, omega});
  });

  struct Cand {
    float value;
    std::uint32_t sample;
    std::uint32_t index;
  };
  std::vector<Cand> cands;
  for (std::size_t s = 0; s < B; ++s) {
    const float* ps = p.data() + s * omega;
    for (std::size_t i = 0; i < omega; ++i) {
      if (ps[i] > 0.0f) {
        cands.push_back({ps[i], static_cast<std::uint32_t>(s),
                         static_cast<std::uint32_t>(i)});
      }
    }
  }
  const std::size_t budget = static_cast<std::size_t>(model.k) * B;
  if (cands.size() > budget) {
    const auto better = [](const Cand& a, const Cand& b) {
      if (a.value != b.value) return a.value > b.value;
      if (a.sample != b.sample) return a.sample < b.sample;
      return a.index < b.index;
    };
    std::nth_element(cands.begin(), cands.begin() + budget, cands.end(),
                     better);
    cands.resize(budget);
  }

  std::vector<SparseActivation> out(B);
  for (auto& z : out) z.omega = model.omega;
  for (const auto& c : cands) out[c.sample].entries.emplace_back(c.index, c.value);
  for (auto& z : out) {
    std::sort(z.entries.begin(), z.entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return out;
}

std::vector<float> decode(const SaeModel& model, const SparseActivation& z) {
  return decode_prefix(model, z, model.omega);
}

std::vector<float> decode_prefix(const SaeModel& model,
                                 const SparseActivation& z, std::uint32_t m) {
  if (z.omega != model.omega) {
    throw ShapeError("activation omega != model omega");
  }
  if (std::find(model.groups.begin(), model.groups.end(), m) ==
      model.groups.end()) {
    throw InvalidArgument("prefix size " + std::to_string(m) +
                          " is not a model group");
  }
  std::vector<double> acc(model.d, 0.0);
  for (const auto& [i, a] : z.entries) {
    if (i >= model.omega) {
      throw IndexError("activation index " + std::to_string(i) +
                       " >= omega = " + std::to_string(model.omega));
    }
    if (i >= m) continue;
    axpy(a, model.dec_row(i), acc);
  }
  std::vector<float> out(model.d);
  for (std::uint32_t j = 0; j < model.d; ++j) {
    out[j] = static_cast<float>(acc[j] + model.b_dec[j]);
  }
  return out;
}

std::vector<float> decode_dense(const SaeModel& model,
                                std::span<const float> code) {
  if (code.size() != model.omega) {
    throw ShapeError("dense code length != omega");
  }
  std::vector<double> acc(model.d, 0.0);
  for (std::uint32_t i = 0; i < model.omega; ++i) {
    if (code[i] != 0.0f) axpy(code[i], model.dec_row(i), acc);
  }
  std::vector<float> out(model.d);
  for (std::uint32_t j = 0; j < model.d; ++j) {
    out[j] = static_cast<float>(acc[j] + model.b_dec[j]);
  }
  return out;
}

double reconstruction_error(const SaeModel& model, std::span<const float> v) {
  check_input(model, v);
  const auto z = encode_topk(model, v);
  const auto vhat = decode(model, z);
  return squared_distance(v, vhat) / static_cast<double>(model.d);
}

void save_model(const SaeModel& model, const std::filesystem::path& path) {
  model.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, model.d);
  put_u32(out, model.omega);
  put_u32(out, model.k);
  put_u32(out, static_cast<std::uint32_t>(model.groups.size()));
  for (const auto g : model.groups) put_u32(out, g);
  put_block(out, model.w_enc);
  put_block(out, model.b_enc);
  put_block(out, model.w_dec);
  put_block(out, model.b_dec);
  if (!out) throw IoError("short write to " + path.string());
}

SaeModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path.string() + ": not an SAE1 checkpoint (bad magic)");
  }
  const auto version = get_u32(in, path);
  if (version != kVersion) {
    throw FormatError("unsupported SAE1 version " + std::to_string(version));
  }
  SaeModel m;
  m.d = get_u32(in, path);
  m.omega = get_u32(in, path);
  m.k = get_u32(in, path);
  const auto g = get_u32(in, path);
  m.groups.resize(g);
  for (auto& x : m.groups) x = get_u32(in, path);
  const std::size_t wd = static_cast<std::size_t>(m.omega) * m.d;
  get_block(in, m.w_enc, wd, path);
  get_block(in, m.b_enc, m.omega, path);
  get_block(in, m.w_dec, wd, path);
  get_block(in, m.b_dec, m.d, path);
  in.peek();
  if (!in.eof()) throw CorruptFile("trailing bytes in " + path.string());
  m.validate();
  return m;
}

}  // namespace neuronscope
