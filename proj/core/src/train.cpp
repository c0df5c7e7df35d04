#include "neuronscope/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "neuronscope/errors.hpp"
#include "neuronscope/linalg.hpp"
#include "neuronscope/parallel.hpp"

namespace neuronscope {

namespace {

// Stream tags for deriving independent deterministic RNG streams from the
// config seed.
constexpr std::uint64_t kInitStream = 0x1a17;
constexpr std::uint64_t kBatchStream = 0xba7c;
constexpr std::uint64_t kResampleStream = 0xdead;

struct ForwardScratch {
  // Per-sample suffix residual sums, G*d doubles each; res[g] holds
  // sum_{g' >= g} (recon_prefix(g') - v).
  std::vector<std::vector<double>> suffix;
  // Per-sample dL/d(value) for each kept entry, prefactor included.
  std::vector<std::vector<double>> dvalue;
  // Per-sample group band of each kept entry.
  std::vector<std::vector<std::uint32_t>> band;
};

// Shared loss/gradient pass. The per-sample work runs as a pure parallel map;
// the cross-sample accumulation below walks samples in index order, so the
// result is independent of the thread count.
double forward_pass(const SaeModel& model, const EmbeddingMatrix& batch,
                    unsigned threads, Gradients* grads,
                    std::vector<std::uint64_t>* counts, double* min_kept) {
  const auto codes = encode_batch_topk(model, batch, threads);
  const std::size_t B = batch.count;
  const std::size_t d = model.d;
  const std::size_t G = model.groups.size();
  const double prefactor =
      2.0 / (static_cast<double>(G) * static_cast<double>(B) *
             static_cast<double>(d));

  std::vector<double> sample_loss(B, 0.0);
  ForwardScratch scratch;
  if (grads) {
    scratch.suffix.resize(B);
    scratch.dvalue.resize(B);
    scratch.band.resize(B);
  }

  parallel_for(B, threads, [&](std::size_t b) {
    const auto v = batch.row(b);
    const auto& entries = codes[b].entries;
    std::vector<double> recon(d);
    for (std::size_t j = 0; j < d; ++j) recon[j] = model.b_dec[j];
    std::vector<double> res(G * d);
    std::size_t e = 0;
    double loss_b = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
      const std::uint32_t m = model.groups[g];
      while (e < entries.size() && entries[e].first < m) {
        axpy(entries[e].second, model.dec_row(entries[e].first),
             std::span<double>(recon));
        ++e;
      }
      double* rg = res.data() + g * d;
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        rg[j] = recon[j] - v[j];
        sq += rg[j] * rg[j];
      }
      loss_b += sq;
    }
    sample_loss[b] = loss_b;

    if (grads) {
      // Suffix sums over groups, in place.
      for (std::size_t g = G - 1; g-- > 0;) {
        double* rg = res.data() + g * d;
        const double* rn = res.data() + (g + 1) * d;
        for (std::size_t j = 0; j < d; ++j) rg[j] += rn[j];
      }
      auto& dvalue = scratch.dvalue[b];
      auto& band = scratch.band[b];
      dvalue.resize(entries.size());
      band.resize(entries.size());
      std::size_t g = 0;
      for (std::size_t e2 = 0; e2 < entries.size(); ++e2) {
        const std::uint32_t i = entries[e2].first;
        while (model.groups[g] <= i) ++g;
        band[e2] = static_cast<std::uint32_t>(g);
        const double* rg = res.data() + g * d;
        const auto wrow = model.dec_row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += rg[j] * wrow[j];
        dvalue[e2] = prefactor * acc;
      }
      scratch.suffix[b] = std::move(res);
    }
  });

  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) total += sample_loss[b];
  total *= prefactor * 0.5;

  if (min_kept) {
    double mk = std::numeric_limits<double>::infinity();
    for (const auto& z : codes) {
      for (const auto& [i, a] : z.entries) mk = std::min(mk, double(a));
    }
    *min_kept = mk;
  }

  if (counts) {
    for (const auto& z : codes) {
      for (const auto& [i, a] : z.entries) (*counts)[i] += 1;
    }
  }

  if (grads) {
    for (std::size_t b = 0; b < B; ++b) {
      const auto v = batch.row(b);
      const auto& entries = codes[b].entries;
      const auto& res = scratch.suffix[b];
      const double* r0 = res.data();
      for (std::size_t j = 0; j < d; ++j) {
        grads->b_dec[j] += prefactor * r0[j];
      }
      for (std::size_t e = 0; e < entries.size(); ++e) {
        const std::uint32_t i = entries[e].first;
        const double a = entries[e].second;
        const double* rg = res.data() + scratch.band[b][e] * d;
        double* gw_dec = grads->w_dec.data() + static_cast<std::size_t>(i) * d;
        double* gw_enc = grads->w_enc.data() + static_cast<std::size_t>(i) * d;
        const double dv = scratch.dvalue[b][e];
        for (std::size_t j = 0; j < d; ++j) {
          gw_dec[j] += prefactor * a * rg[j];
          gw_enc[j] += dv * v[j];
        }
        grads->b_enc[i] -= dv;
      }
    }
  }
  return total;
}

void adam_update_tensor(std::vector<float>& p, const std::vector<double>& g,
                        std::vector<double>& m, std::vector<double>& v,
                        const AdamParams& ap, double bc1, double bc2) {
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = ap.beta1 * m[i] + (1.0 - ap.beta1) * g[i];
    v[i] = ap.beta2 * v[i] + (1.0 - ap.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] = static_cast<float>(p[i] - ap.lr * mhat / (std::sqrt(vhat) + ap.eps));
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (expansion_factor < 1) throw InvalidArgument("expansion_factor >= 1");
  if (group_fractions.empty() || group_fractions.back() != 1.0) {
    throw InvalidArgument("group fractions must end at 1.0");
  }
  double prev = 0.0;
  for (const auto f : group_fractions) {
    if (!(f > prev) || f > 1.0) {
      throw InvalidArgument("group fractions must be ascending in (0, 1]");
    }
    prev = f;
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw InvalidArgument("bad Adam hyperparameters");
  }
}

AdamParams TrainConfig::adam_params(std::uint32_t omega) const {
  AdamParams ap;
  ap.lr = lr > 0.0 ? lr : default_learning_rate(omega);
  ap.beta1 = adam_beta1;
  ap.beta2 = adam_beta2;
  ap.eps = adam_eps;
  ap.update_decoder_bias = decoder_bias == DecoderBiasMode::trained;
  return ap;
}

Gradients Gradients::zeros_like(const SaeModel& model) {
  Gradients g;
  const std::size_t wd = static_cast<std::size_t>(model.omega) * model.d;
  g.w_enc.assign(wd, 0.0);
  g.b_enc.assign(model.omega, 0.0);
  g.w_dec.assign(wd, 0.0);
  g.b_dec.assign(model.d, 0.0);
  return g;
}

AdamState AdamState::zeros_like(const SaeModel& model) {
  AdamState s;
  const std::size_t wd = static_cast<std::size_t>(model.omega) * model.d;
  s.m_w_enc.assign(wd, 0.0);
  s.v_w_enc.assign(wd, 0.0);
  s.m_b_enc.assign(model.omega, 0.0);
  s.v_b_enc.assign(model.omega, 0.0);
  s.m_w_dec.assign(wd, 0.0);
  s.v_w_dec.assign(wd, 0.0);
  s.m_b_dec.assign(model.d, 0.0);
  s.v_b_dec.assign(model.d, 0.0);
  return s;
}

std::vector<std::uint32_t> compute_groups(std::span<const double> fractions,
                                          std::uint32_t omega) {
  std::vector<std::uint32_t> groups;
  groups.reserve(fractions.size());
  std::uint32_t prev = 0;
  for (const auto f : fractions) {
    const auto g = static_cast<std::uint32_t>(
        std::llround(f * static_cast<double>(omega)));
    if (g < 1 || g > omega) {
      throw InvalidArgument("group fraction " + std::to_string(f) +
                            " rounds outside [1, omega]");
    }
    if (g <= prev) {
      throw InvalidArgument("group sizes must be strictly ascending");
    }
    groups.push_back(g);
    prev = g;
  }
  if (groups.back() != omega) {
    throw InvalidArgument("last group must equal omega");
  }
  return groups;
}

SaeModel init_model(std::uint32_t d, const TrainConfig& cfg,
                    std::span<const float> data_mean) {
  cfg.validate();
  if (d == 0) throw InvalidArgument("d must be positive");
  if (data_mean.size() != d) throw ShapeError("data_mean length != d");
  SaeModel model;
  model.d = d;
  model.omega = cfg.expansion_factor * d;
  model.k = cfg.k;
  if (model.k > model.omega) {
    throw InvalidArgument("k exceeds latent width");
  }
  model.groups = compute_groups(cfg.group_fractions, model.omega);

  const std::size_t wd = static_cast<std::size_t>(model.omega) * d;
  model.w_dec.resize(wd);
  Rng rng(derive_seed(cfg.seed, kInitStream));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < wd; ++i) {
    model.w_dec[i] = static_cast<float>(rng.gaussian() * scale);
  }
  model.normalize_decoder();
  model.w_enc = model.w_dec;  // atoms double as matched-filter readouts
  model.b_enc.assign(model.omega, 0.0f);
  model.b_dec.assign(data_mean.begin(), data_mean.end());
  model.validate();
  return model;
}

double matryoshka_loss(const SaeModel& model, const EmbeddingMatrix& batch,
                       unsigned threads) {
  return forward_pass(model, batch, threads, nullptr, nullptr, nullptr);
}

Gradients grad_loss(const SaeModel& model, const EmbeddingMatrix& batch,
                    unsigned threads) {
  Gradients g = Gradients::zeros_like(model);
  forward_pass(model, batch, threads, &g, nullptr, nullptr);
  return g;
}

void adam_step(SaeModel& model, const Gradients& grads, AdamState& state,
               const AdamParams& params) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(params.beta1,
                                    static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(params.beta2,
                                    static_cast<double>(state.step));
  adam_update_tensor(model.w_enc, grads.w_enc, state.m_w_enc, state.v_w_enc,
                     params, bc1, bc2);
  adam_update_tensor(model.b_enc, grads.b_enc, state.m_b_enc, state.v_b_enc,
                     params, bc1, bc2);
  adam_update_tensor(model.w_dec, grads.w_dec, state.m_w_dec, state.v_w_dec,
                     params, bc1, bc2);
  if (params.update_decoder_bias) {
    adam_update_tensor(model.b_dec, grads.b_dec, state.m_b_dec, state.v_b_dec,
                       params, bc1, bc2);
  }

  model.normalize_decoder();
  // Keep the optimizer history tangent to the unit sphere: remove each
  // moment's component along its (re-normalized) atom.
  for (std::uint32_t i = 0; i < model.omega; ++i) {
    const auto row = model.dec_row(i);
    double* m = state.m_w_dec.data() + static_cast<std::size_t>(i) * model.d;
    double proj = 0.0;
    for (std::uint32_t j = 0; j < model.d; ++j) proj += m[j] * row[j];
    if (proj != 0.0) {
      for (std::uint32_t j = 0; j < model.d; ++j) m[j] -= proj * row[j];
    }
  }
}

std::size_t dead_neuron_sweep(SaeModel& model,
                              std::span<const std::uint64_t> counts, Rng& rng,
                              AdamState* state) {
  if (counts.size() != model.omega) {
    throw ShapeError("counts length != omega");
  }
  std::size_t redrawn = 0;
  std::vector<double> dir(model.d);
  for (std::uint32_t i = 0; i < model.omega; ++i) {
    if (counts[i] != 0) continue;
    double sq = 0.0;
    for (auto& x : dir) {
      x = rng.gaussian();
      sq += x * x;
    }
    const double inv = 1.0 / std::sqrt(sq);
    auto dec = model.dec_row(i);
    auto enc = model.enc_row(i);
    for (std::uint32_t j = 0; j < model.d; ++j) {
      dec[j] = static_cast<float>(dir[j] * inv);
      enc[j] = static_cast<float>(0.1 * dir[j] * inv);
    }
    model.b_enc[i] = 0.0f;
    if (state) {
      const std::size_t off = static_cast<std::size_t>(i) * model.d;
      std::fill_n(state->m_w_enc.begin() + off, model.d, 0.0);
      std::fill_n(state->v_w_enc.begin() + off, model.d, 0.0);
      std::fill_n(state->m_w_dec.begin() + off, model.d, 0.0);
      std::fill_n(state->v_w_dec.begin() + off, model.d, 0.0);
      state->m_b_enc[i] = 0.0;
      state->v_b_enc[i] = 0.0;
    }
    ++redrawn;
  }
  return redrawn;
}

std::pair<SaeModel, TrainReport> train(const EmbeddingMatrix& data,
                                       const TrainConfig& cfg,
                                       const TrainProgressFn& on_progress) {
  cfg.validate();
  if (data.count < 1) throw InvalidArgument("training data is empty");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<float> bias_init =
      cfg.decoder_bias == DecoderBiasMode::zero
          ? std::vector<float>(data.dim, 0.0f)
          : column_mean(data);
  SaeModel model =
      init_model(static_cast<std::uint32_t>(data.dim), cfg, bias_init);
  AdamState state = AdamState::zeros_like(model);
  const AdamParams ap = cfg.adam_params(model.omega);
  Rng resample_rng(derive_seed(cfg.seed, kResampleStream));
  const std::uint64_t batch_stream = derive_seed(cfg.seed, kBatchStream);

  TrainReport report;
  std::vector<std::uint64_t> window_counts(model.omega, 0);
  Gradients grads = Gradients::zeros_like(model);
  double threshold_sum = 0.0;
  std::uint64_t threshold_n = 0;

  for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
    const auto batch =
        sample_batch(data, cfg.batch_size, derive_seed(batch_stream, step));
    std::fill(grads.w_enc.begin(), grads.w_enc.end(), 0.0);
    std::fill(grads.b_enc.begin(), grads.b_enc.end(), 0.0);
    std::fill(grads.w_dec.begin(), grads.w_dec.end(), 0.0);
    std::fill(grads.b_dec.begin(), grads.b_dec.end(), 0.0);
    double min_kept = 0.0;
    const double loss = forward_pass(model, batch, cfg.threads, &grads,
                                     &window_counts, &min_kept);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite loss at step " + std::to_string(step));
    }
    adam_step(model, grads, state, ap);
    if (std::isfinite(min_kept)) {
      threshold_sum += min_kept;
      threshold_n += 1;
    }
    if (cfg.dead_neuron_window > 0 && step % cfg.dead_neuron_window == 0) {
      report.dead_neuron_count +=
          dead_neuron_sweep(model, window_counts, resample_rng, &state);
      std::fill(window_counts.begin(), window_counts.end(), 0);
    }
    if (step == 1 || step % 100 == 0 || step == cfg.steps) {
      if (report.loss_curve.empty() || report.loss_curve.back().first != step) {
        report.loss_curve.emplace_back(step, loss);
        if (on_progress) on_progress(step, model, loss);
      }
    }
  }

  report.final_loss = report.loss_curve.back().second;
  report.batch_topk_threshold =
      threshold_n > 0 ? threshold_sum / static_cast<double>(threshold_n) : 0.0;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {std::move(model), std::move(report)};
}

}  // namespace neuronscope
