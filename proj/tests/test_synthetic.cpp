#include <doctest.h>

#include <cmath>
#include <numeric>

#include "neuronscope/errors.hpp"
#include "neuronscope/linalg.hpp"
#include "neuronscope/stats.hpp"
#include "neuronscope/synthetic.hpp"
#include "neuronscope/train.hpp"
#include "helpers.hpp"

using namespace neuronscope;

TEST_CASE("ground truth generation is pure in the seed") {
  const auto a = gen_ground_truth(16, 32, 4, 9);
  const auto b = gen_ground_truth(16, 32, 4, 9);
  CHECK(a.atoms == b.atoms);
  CHECK(a.always_on_ids == std::vector<std::uint32_t>{0, 1, 2, 3});
  CHECK(a.content_ids.size() == 28);
}

TEST_CASE("default-scale ground truth respects the coherence cap") {
  const auto gt = gen_ground_truth(64, 256, 10, 7);
  double max_coh = 0.0;
  for (std::uint32_t i = 0; i < gt.n_atoms; ++i) {
    CHECK(norm(gt.atom(i)) == doctest::Approx(1.0).epsilon(1e-6));
    for (std::uint32_t j = i + 1; j < gt.n_atoms; ++j) {
      max_coh = std::max(max_coh, std::abs(dot(gt.atom(i), gt.atom(j))));
    }
  }
  CHECK(max_coh <= 0.5);
  CHECK(max_coh <= gt.params.coherence_cap + 1e-9);
}

TEST_CASE("infeasible packing raises GenerationError") {
  GroundTruthParams params;
  params.coherence_cap = 0.05;  // impossible for 64 atoms in d = 8
  params.k_true = 2;
  CHECK_THROWS_AS(gen_ground_truth(8, 64, 2, 1, params), GenerationError);
  CHECK_THROWS_AS(gen_ground_truth(8, 65, 2, 1), InvalidArgument);
  CHECK_THROWS_AS(gen_ground_truth(8, 4, 4, 1), InvalidArgument);
}

TEST_CASE("noise-free single-atom items equal their atom") {
  GroundTruthParams params;
  params.k_true = 1;
  params.noise_sigma = 0.0;
  params.content_low = 1.0;
  params.content_high = 1.0;
  const auto gt = gen_ground_truth(16, 24, 0, 3, params);
  const auto ds = gen_dataset(gt, 20, 5);
  for (std::size_t i = 0; i < ds.data.count; ++i) {
    REQUIRE(ds.labels[i].content.size() == 1);
    const auto [atom_id, coeff] = ds.labels[i].content[0];
    CHECK(coeff == doctest::Approx(1.0));
    const auto atom = gt.atom(atom_id);
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK(ds.data.values[i * 16 + j] == doctest::Approx(atom[j]).epsilon(1e-6));
    }
  }
}

TEST_CASE("every item shares the always-on component direction") {
  const auto gt = gen_ground_truth(32, 64, 5, 11);
  const auto ds = gen_dataset(gt, 30, 2);
  for (const auto& label : ds.labels) {
    CHECK(label.always_on.size() == 5);
    // All always-on coefficients in an item share the same value (one
    // magnitude factor), and lie inside the jitter band.
    const float c0 = label.always_on[0].second;
    for (const auto& [id, c] : label.always_on) CHECK(c == c0);
    const auto& p = gt.params;
    CHECK(c0 >= p.always_on_strength * (1 - p.always_on_jitter) - 1e-6);
    CHECK(c0 <= p.always_on_strength * (1 + p.always_on_jitter) + 1e-6);
  }
}

TEST_CASE("labels reproduce the item up to ambient noise") {
  const auto gt = gen_ground_truth(24, 48, 3, 13);
  const auto ds = gen_dataset(gt, 10, 21);
  for (std::size_t i = 0; i < ds.data.count; ++i) {
    const auto content = content_component(gt, ds.labels[i]);
    const auto always = always_on_component(gt, ds.labels[i]);
    double err = 0.0;
    for (std::size_t j = 0; j < 24; ++j) {
      const double resid = static_cast<double>(ds.data.values[i * 24 + j]) -
                           content[j] - always[j];
      err += resid * resid;
    }
    // Only sigma * gaussian remains; bound generously at 6 sigma per dim.
    CHECK(err <= 24 * std::pow(6 * gt.params.noise_sigma, 2));
  }
}

TEST_CASE("item norms concentrate near the component budget") {
  const auto gt = gen_ground_truth(64, 256, 10, 7);
  const auto ds = gen_dataset(gt, 400, 77);
  const auto& p = gt.params;
  // Expected squared norm: always-on energy + k_true * E[c^2] + sigma^2 d,
  // up to atom cross-terms bounded by the coherence cap.
  const double e_gamma2 = 1.0 + p.always_on_jitter * p.always_on_jitter / 3.0;
  std::vector<float> ones(gt.d, 0.0f);
  std::vector<double> sum_atoms(gt.d, 0.0);
  for (const auto id : gt.always_on_ids) axpy(1.0, gt.atom(id), sum_atoms);
  double ao_dir_sq = 0.0;
  for (const auto x : sum_atoms) ao_dir_sq += x * x;
  const double ao_energy =
      p.always_on_strength * p.always_on_strength * e_gamma2 * ao_dir_sq;
  const double e_c2 = (p.content_low * p.content_low +
                       p.content_low * p.content_high +
                       p.content_high * p.content_high) / 3.0;
  const double expected =
      ao_energy + p.k_true * e_c2 + p.noise_sigma * p.noise_sigma * gt.d;
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < ds.data.count; ++i) {
    mean_sq += squared_norm(ds.data.row(i));
  }
  mean_sq /= ds.data.count;
  CHECK(mean_sq == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("match_atoms scores a permuted copy of the dictionary perfectly") {
  const auto gt = gen_ground_truth(16, 24, 2, 5);
  SaeModel m;
  m.d = 16;
  m.omega = 24;
  m.k = 4;
  m.groups = {24};
  m.b_enc.assign(24, 0.0f);
  m.b_dec.assign(16, 0.0f);
  m.w_dec.resize(24 * 16);
  // Reverse permutation, with one sign flip.
  for (std::uint32_t i = 0; i < 24; ++i) {
    const auto atom = gt.atom(23 - i);
    const float sign = i == 5 ? -1.0f : 1.0f;
    for (std::uint32_t j = 0; j < 16; ++j) {
      m.w_dec[i * 16 + j] = sign * atom[j];
    }
  }
  m.w_enc = m.w_dec;
  const auto report = match_atoms(m, gt);
  CHECK(report.recovery_rate == 1.0);
  CHECK(report.injectivity_violations == 0);
  for (const auto& match : report.per_atom) {
    CHECK(match.abs_cosine == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("a random untrained model recovers almost nothing") {
  const auto gt = gen_ground_truth(64, 256, 10, 7);
  auto m = nstest::random_model(64, 4096, 8, 31);
  m.normalize_decoder();
  const auto report = match_atoms(m, gt);
  CHECK(report.recovery_rate < 0.05);
}

TEST_CASE("zeroing nothing is exactly the baseline") {
  auto m = nstest::random_model(8, 32, 4, 19);
  const auto data = nstest::random_matrix(10, 8, 23, 2.0);
  NeuronCatalog catalog;
  catalog.omega = 32;  // empty always-on set
  const auto rep = zeroing_experiment(m, data, catalog, 3);
  CHECK(rep.zero_always_on == rep.baseline);
  CHECK(rep.ratio_always_on() == doctest::Approx(1.0));
  // Zeroing all active neurons leaves the bias-only reconstruction.
  double expected = 0.0;
  for (std::size_t i = 0; i < data.count; ++i) {
    expected += squared_distance(data.row(i), m.b_dec) / 8.0;
  }
  expected /= data.count;
  CHECK(rep.zero_image_specific == doctest::Approx(expected).epsilon(1e-9));
  // The random set avoids active neurons, so it is a no-op on the code.
  CHECK(rep.zero_random == doctest::Approx(rep.baseline).epsilon(1e-12));
}

TEST_CASE("cns benefit is exactly zero at lambda 0 and t 0") {
  const auto gt = gen_ground_truth(32, 64, 4, 3);
  const auto ds = gen_dataset(gt, 16, 9);
  auto m = nstest::random_model(32, 128, 6, 41);
  m.normalize_decoder();
  const auto ledger = build_ledger(m, ds.data, 10);
  const auto catalog = detect_always_on(ledger, 1.0);
  const auto schedule = default_schedule();

  SteeringPlan lambda0;
  lambda0.lambda = 0.0;
  lambda0.noise_step = 500;
  const auto r0 = cns_benefit(m, gt, ds.data, ds.labels, catalog, lambda0,
                              schedule, 5);
  CHECK(r0.mean_improvement == 0.0);
  CHECK(r0.fraction_improved == 0.0);

  SteeringPlan t0;
  t0.lambda = 1.0;
  t0.noise_step = 0;
  const auto rt = cns_benefit(m, gt, ds.data, ds.labels, catalog, t0,
                              schedule, 5);
  CHECK(rt.mean_improvement == 0.0);
}

TEST_CASE("ground truth and labels round-trip through files") {
  nstest::TempDir tmp;
  const auto gt = gen_ground_truth(16, 32, 3, 77);
  write_ground_truth(gt, tmp.file("gt.json"), tmp.file("atoms.emb"));
  const auto back = read_ground_truth(tmp.file("gt.json"));
  CHECK(back.d == gt.d);
  CHECK(back.atoms == gt.atoms);
  CHECK(back.always_on_ids == gt.always_on_ids);
  CHECK(back.params.k_true == gt.params.k_true);
  CHECK(back.params.always_on_jitter ==
        doctest::Approx(gt.params.always_on_jitter));

  const auto ds = gen_dataset(gt, 5, 3);
  write_labels(ds.labels, tmp.file("labels.json"));
  const auto labels = read_labels(tmp.file("labels.json"));
  REQUIRE(labels.size() == 5);
  CHECK(labels[2].content == ds.labels[2].content);
  CHECK(labels[2].always_on == ds.labels[2].always_on);
}

TEST_CASE("spearman rho helper behaves") {
  std::vector<double> xs{0, 1, 2, 3, 4};
  std::vector<double> inc{1, 2, 4, 8, 16};
  std::vector<double> dec{5, 4, 3, 2, 1};
  CHECK(spearman_rho(xs, inc) == doctest::Approx(1.0));
  CHECK(spearman_rho(xs, dec) == doctest::Approx(-1.0));
}

TEST_CASE("doubling training steps keeps recovery within the stability band") {
  // Small-scale oracle: recovery at 2T steps never drops more than 0.05
  // below recovery at T steps, across seeds.
  GroundTruthParams params;
  params.k_true = 3;
  params.coherence_cap = 0.5;
  const auto gt = gen_ground_truth(32, 64, 4, 19, params);
  const auto ds = gen_dataset(gt, 1024, 5);
  for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
    TrainConfig cfg;
    cfg.k = 5;
    cfg.expansion_factor = 4;  // omega = 128
    cfg.batch_size = 128;
    cfg.group_fractions = {0.5, 1.0};
    cfg.dead_neuron_window = 200;
    cfg.decoder_bias = DecoderBiasMode::zero;
    cfg.seed = seed;
    cfg.steps = 400;
    auto [m1, r1] = train(ds.data, cfg);
    cfg.steps = 800;
    auto [m2, r2] = train(ds.data, cfg);
    const double rec1 = match_atoms(m1, gt).recovery_rate;
    const double rec2 = match_atoms(m2, gt).recovery_rate;
    CHECK(rec2 >= rec1 - 0.05);
  }
}
