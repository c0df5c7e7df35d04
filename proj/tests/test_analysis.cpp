#include <doctest.h>

#include <fstream>

#include "neuronscope/analysis.hpp"
#include "neuronscope/errors.hpp"
#include "neuronscope/rng.hpp"
#include "helpers.hpp"

using namespace neuronscope;
using nstest::identity_model;
using nstest::make_matrix;

namespace {

SparseActivation code(std::uint32_t omega,
                      std::vector<std::pair<std::uint32_t, float>> entries) {
  SparseActivation z;
  z.omega = omega;
  z.entries = std::move(entries);
  return z;
}

}  // namespace

TEST_CASE("ledger records the strongest entries, value-descending") {
  auto m = identity_model(6, 4);
  auto data = make_matrix(1, 6, {5, 1, 0, 0, 0, 0});
  const auto ledger = build_ledger(m, data, 2);
  REQUIRE(ledger.records.size() == 1);
  CHECK(ledger.records[0].entries ==
        std::vector<std::pair<std::uint32_t, float>>{{0, 5.0f}, {1, 1.0f}});
}

TEST_CASE("identical items give identical records") {
  auto m = identity_model(4, 2);
  auto data = make_matrix(2, 4, {3, 1, 2, 0, 3, 1, 2, 0});
  const auto ledger = build_ledger(m, data, 3);
  CHECK(ledger.records[0].entries == ledger.records[1].entries);
}

TEST_CASE("ledger entries are non-increasing and consistent with the encoder") {
  auto m = nstest::random_model(8, 32, 4, 6);
  const auto data = nstest::random_matrix(20, 8, 3);
  const std::uint32_t k_record = 6;
  const auto ledger = build_ledger(m, data, k_record);
  for (std::size_t i = 0; i < data.count; ++i) {
    const auto& rec = ledger.records[i];
    CHECK(rec.entries.size() <= k_record);
    for (std::size_t e = 1; e < rec.entries.size(); ++e) {
      CHECK(rec.entries[e].second <= rec.entries[e - 1].second);
    }
    // Every recorded (index, value) equals the encoder output at sparsity
    // max(K, k_record).
    const auto z = encode_topk(m, data.row(i), std::max(m.k, k_record));
    for (const auto& [idx, val] : rec.entries) {
      CHECK(z.value_at(idx) == val);
    }
  }
}

TEST_CASE("detect_always_on applies the threshold over appearances") {
  // 100 records; neuron 7 in all, neuron 3 in 99.
  ActivationLedger ledger;
  ledger.omega = 16;
  ledger.k_record = 2;
  for (int i = 0; i < 100; ++i) {
    LedgerRecord rec;
    rec.item = std::to_string(i);
    rec.entries = {{7, 2.0f}};
    if (i > 0) rec.entries.push_back({3, 1.0f});
    ledger.records.push_back(rec);
  }
  const auto strict = detect_always_on(ledger, 1.0);
  CHECK(strict.always_on == std::vector<std::uint32_t>{7});
  const auto loose = detect_always_on(ledger, 0.95);
  CHECK(loose.always_on == std::vector<std::uint32_t>{3, 7});

  // Stats populated for every appearing neuron.
  REQUIRE(strict.neurons.size() == 2);
  CHECK(strict.neurons[0].id == 3);
  CHECK(strict.neurons[0].count == 99);
  CHECK(strict.neurons[0].appearance_fraction == doctest::Approx(0.99));
  CHECK(strict.neurons[1].mean_active_value == doctest::Approx(2.0));
}

TEST_CASE("detect_always_on rejects an empty ledger") {
  ActivationLedger ledger;
  ledger.omega = 4;
  CHECK_THROWS_AS(detect_always_on(ledger, 1.0), InvalidArgument);
}

TEST_CASE("change ratio arithmetic") {
  const auto za = code(32, {{1, 3.0f}, {2, 2.0f}, {3, 1.0f}});
  CHECK(change_ratio(za, za, 3) == 0.0);

  const auto zb = code(32, {{10, 3.0f}, {11, 2.0f}, {12, 1.0f}});
  CHECK(change_ratio(za, zb, 3) == 1.0);

  // k = 20 with overlap 15 -> 0.25.
  std::vector<std::pair<std::uint32_t, float>> ea, eb;
  for (std::uint32_t i = 0; i < 20; ++i) ea.push_back({i, 20.0f - i});
  for (std::uint32_t i = 5; i < 25; ++i) eb.push_back({i, 25.0f - i});
  CHECK(change_ratio(code(32, ea), code(32, eb), 20) == doctest::Approx(0.25));
}

TEST_CASE("change ratio guards") {
  const auto z = code(8, {{0, 1.0f}});
  CHECK_THROWS_AS(change_ratio(z, z, 0), InvalidArgument);
  CHECK_THROWS_AS(change_ratio(z, code(16, {}), 2), ShapeError);
}

TEST_CASE("change ratio is symmetric, bounded, and scale-invariant") {
  Rng rng(33);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<std::uint32_t, float>> ea, eb;
    for (std::uint32_t i = 0; i < 16; ++i) {
      if (rng.uniform01() < 0.4) ea.push_back({i, float(rng.uniform01() + 0.1)});
      if (rng.uniform01() < 0.4) eb.push_back({i, float(rng.uniform01() + 0.1)});
    }
    const auto za = code(16, ea);
    const auto zb = code(16, eb);
    const auto k = 1 + static_cast<std::uint32_t>(rng.uniform_below(8));
    const double ab = change_ratio(za, zb, k);
    CHECK(ab == change_ratio(zb, za, k));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    // The denominator stays k even when fewer entries exist, so the self
    // ratio is 1 - min(n, k)/k; it reaches 0 exactly when n >= k.
    const double self_expected =
        1.0 - static_cast<double>(std::min<std::size_t>(za.entries.size(), k)) /
                  static_cast<double>(k);
    CHECK(change_ratio(za, za, k) == self_expected);

    auto scale = [](const SparseActivation& z, float c) {
      auto out = z;
      for (auto& [i, v] : out.entries) v *= c;
      return out;
    };
    CHECK(change_ratio(scale(za, 3.0f), scale(zb, 3.0f), k) == ab);
  }
}

TEST_CASE("both-empty codes give ratio 1") {
  CHECK(change_ratio(code(8, {}), code(8, {}), 4) == 1.0);
}

TEST_CASE("change_ratio_curve starts at exactly zero") {
  auto m = nstest::random_model(8, 32, 4, 21);
  const auto data = nstest::random_matrix(12, 8, 5, 3.0);
  const auto schedule = default_schedule();
  const auto curve =
      change_ratio_curve(m, data, {0, 300, 900}, schedule, 4, 11);
  REQUIRE(curve.size() == 3);
  CHECK(curve[0].first == 0);
  CHECK(curve[0].second == 0.0);
  CHECK(curve[2].second >= curve[1].second);
}

TEST_CASE("top_activating_items ranks by recorded value") {
  ActivationLedger ledger;
  ledger.omega = 8;
  ledger.k_record = 2;
  ledger.records = {{"a", {{1, 5.0f}}},
                    {"b", {{1, 9.0f}, {2, 1.0f}}},
                    {"c", {{2, 4.0f}}},
                    {"d", {{1, 7.0f}}}};
  const auto top = top_activating_items(ledger, 1, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == std::pair<std::string, float>{"b", 9.0f});
  CHECK(top[1] == std::pair<std::string, float>{"d", 7.0f});

  CHECK(top_activating_items(ledger, 5, 3).empty());
  CHECK(top_activating_items(ledger, 2, 10).size() == 2);
  CHECK_THROWS_AS(top_activating_items(ledger, 8, 1), IndexError);
}

TEST_CASE("classification partitions the latent range") {
  auto m = identity_model(6, 2);
  auto data = make_matrix(3, 6,
                          {9, 1, 0, 0, 0, 0,
                           9, 0, 2, 0, 0, 0,
                           9, 0, 0, 3, 0, 0});
  const auto ledger = build_ledger(m, data, 2);
  const auto catalog = detect_always_on(ledger, 1.0);
  CHECK(catalog.always_on == std::vector<std::uint32_t>{0});
  const auto labels = classify_neurons(catalog, ledger);
  CHECK(labels[0] == NeuronLabel::always_on);
  CHECK(labels[1] == NeuronLabel::image_specific);
  CHECK(labels[2] == NeuronLabel::image_specific);
  CHECK(labels[3] == NeuronLabel::image_specific);
  CHECK(labels[4] == NeuronLabel::inactive);
  CHECK(labels[5] == NeuronLabel::inactive);
  std::size_t on = 0, specific = 0, inactive = 0;
  for (const auto l : labels) {
    on += l == NeuronLabel::always_on;
    specific += l == NeuronLabel::image_specific;
    inactive += l == NeuronLabel::inactive;
  }
  CHECK(on + specific + inactive == 6);
}

TEST_CASE("analysis JSON round-trips the catalog") {
  nstest::TempDir tmp;
  auto m = identity_model(4, 2);
  auto data = make_matrix(2, 4, {5, 1, 0, 0, 5, 0, 2, 0},
                          {"first", "second"});
  const auto ledger = build_ledger(m, data, 2);
  const auto catalog = detect_always_on(ledger, 1.0);
  const auto path = tmp.file("analysis.json");
  write_analysis(ledger, catalog, path);

  const auto j = analysis_to_json(ledger, catalog);
  CHECK(j["omega"] == 4);
  CHECK(j["k_record"] == 2);
  CHECK(j["records"][0]["item"] == "first");
  CHECK(j["records"][0]["entries"][0][0] == 0);

  const auto back = read_catalog(path);
  CHECK(back.omega == catalog.omega);
  CHECK(back.always_on == catalog.always_on);
  CHECK(back.neurons.size() == catalog.neurons.size());
}

TEST_CASE("dominant planted atom keeps the top-1 index until noise wins") {
  // Identity dictionary; items put coefficient 50 on atom 0 and 1 on the
  // rest. With k = 1 the top index stays 0 for small t and flips only once
  // the noise magnitude overtakes the coefficient.
  auto m = identity_model(16, 4);
  EmbeddingMatrix data;
  data.count = 8;
  data.dim = 16;
  data.values.assign(8 * 16, 1.0f);
  for (std::size_t i = 0; i < 8; ++i) data.values[i * 16] = 50.0f;
  const auto schedule = default_schedule();
  const auto curve =
      change_ratio_curve(m, data, {0, 50, 100, 900}, schedule, 1, 3);
  CHECK(curve[0].second == 0.0);  // t = 0
  CHECK(curve[1].second == 0.0);  // sqrt(alpha) * 50 still dominates
  CHECK(curve[2].second == 0.0);
  CHECK(curve[3].second > 0.5);   // noise ~ N(0,1) vs signal 0.017 * 50
}
