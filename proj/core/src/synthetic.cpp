#include "neuronscope/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "neuronscope/errors.hpp"
#include "neuronscope/linalg.hpp"
#include "neuronscope/rng.hpp"

namespace neuronscope {

namespace {

constexpr std::size_t kAtomRetries = 20000;

// Gram-Schmidt over f32 rows; near-dependent rows are dropped.
std::vector<std::vector<double>> orthonormal_basis(
    const std::vector<std::span<const float>>& rows) {
  std::vector<std::vector<double>> basis;
  for (const auto row : rows) {
    std::vector<double> q(row.begin(), row.end());
    for (const auto& b : basis) {
      double p = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) p += q[j] * b[j];
      for (std::size_t j = 0; j < q.size(); ++j) q[j] -= p * b[j];
    }
    double sq = 0.0;
    for (const auto x : q) sq += x * x;
    if (sq < 1e-12) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& x : q) x *= inv;
    basis.push_back(std::move(q));
  }
  return basis;
}

// ||projection of v onto span(basis)|| / ||v||; 1.0 for the zero vector.
double projection_fraction(std::span<const float> v,
                           const std::vector<std::vector<double>>& basis) {
  const double n2 = squared_norm(v);
  if (n2 == 0.0) return 1.0;
  double p2 = 0.0;
  for (const auto& b : basis) {
    double p = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) p += v[j] * b[j];
    p2 += p * p;
  }
  return std::sqrt(std::min(1.0, p2 / n2));
}

double item_error(const SaeModel& model, std::span<const float> v,
                  const SparseActivation& z) {
  const auto vhat = decode(model, z);
  return squared_distance(v, vhat) / static_cast<double>(model.d);
}

}  // namespace

GroundTruth gen_ground_truth(std::uint32_t d, std::uint32_t n_atoms,
                             std::uint32_t n_always_on, std::uint64_t seed,
                             const GroundTruthParams& params) {
  if (d == 0 || n_atoms == 0) throw InvalidArgument("d and n_atoms positive");
  if (n_always_on >= n_atoms) {
    throw InvalidArgument("n_always_on must be < n_atoms");
  }
  if (n_atoms > 8 * d) {
    throw InvalidArgument("n_atoms > 8d exceeds the supported packing");
  }
  if (params.k_true > n_atoms - n_always_on) {
    throw InvalidArgument("k_true exceeds the number of content atoms");
  }
  GroundTruth gt;
  gt.d = d;
  gt.n_atoms = n_atoms;
  gt.params = params;
  gt.atoms.resize(static_cast<std::size_t>(n_atoms) * d);

  Rng rng(derive_seed(seed, 0xa70e));
  std::vector<double> cand(d);
  std::size_t retries = 0;
  for (std::uint32_t i = 0; i < n_atoms; ++i) {
    for (;;) {
      double sq = 0.0;
      for (auto& x : cand) {
        x = rng.gaussian();
        sq += x * x;
      }
      const double inv = 1.0 / std::sqrt(sq);
      auto row = std::span<float>(gt.atoms.data() +
                                  static_cast<std::size_t>(i) * d, d);
      for (std::uint32_t j = 0; j < d; ++j) {
        row[j] = static_cast<float>(cand[j] * inv);
      }
      bool ok = true;
      for (std::uint32_t p = 0; p < i; ++p) {
        if (std::abs(dot(gt.atom(p), row)) > params.coherence_cap) {
          ok = false;
          break;
        }
      }
      if (ok) break;
      if (++retries > kAtomRetries) {
        throw GenerationError("could not pack " + std::to_string(n_atoms) +
                              " atoms in d=" + std::to_string(d) +
                              " under coherence cap " +
                              std::to_string(params.coherence_cap));
      }
    }
  }
  gt.always_on_ids.resize(n_always_on);
  for (std::uint32_t i = 0; i < n_always_on; ++i) gt.always_on_ids[i] = i;
  gt.content_ids.resize(n_atoms - n_always_on);
  for (std::uint32_t i = n_always_on; i < n_atoms; ++i) {
    gt.content_ids[i - n_always_on] = i;
  }
  return gt;
}

SyntheticDataset gen_dataset(const GroundTruth& gt, std::size_t n,
                             std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("dataset needs at least one item");
  const auto& pr = gt.params;
  SyntheticDataset out;
  out.data.count = n;
  out.data.dim = gt.d;
  out.data.values.assign(n * gt.d, 0.0f);
  out.labels.resize(n);

  const std::size_t n_content = gt.content_ids.size();

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    auto& label = out.labels[i];
    std::vector<double> acc(gt.d, 0.0);

    // One shared magnitude factor per item for the whole always-on component.
    const double gamma = rng.uniform(1.0 - pr.always_on_jitter,
                                     1.0 + pr.always_on_jitter);
    for (const auto id : gt.always_on_ids) {
      const double c = pr.always_on_strength * gamma;
      axpy(c, gt.atom(id), acc);
      label.always_on.emplace_back(id, static_cast<float>(c));
    }

    // k_true distinct content atoms, uniform without replacement.
    std::unordered_set<std::size_t> chosen;
    while (chosen.size() < pr.k_true) {
      chosen.insert(static_cast<std::size_t>(rng.uniform_below(n_content)));
    }
    std::vector<std::size_t> picks(chosen.begin(), chosen.end());
    std::sort(picks.begin(), picks.end());
    for (const auto p : picks) {
      const auto id = gt.content_ids[p];
      const double c = rng.uniform(pr.content_low, pr.content_high);
      axpy(c, gt.atom(id), acc);
      label.content.emplace_back(id, static_cast<float>(c));
    }

    auto row = out.data.row(i);
    for (std::uint32_t j = 0; j < gt.d; ++j) {
      row[j] = static_cast<float>(acc[j] + pr.noise_sigma * rng.gaussian());
    }
  }
  return out;
}

std::vector<float> content_component(const GroundTruth& gt,
                                     const ItemLabel& label) {
  std::vector<double> acc(gt.d, 0.0);
  for (const auto& [id, c] : label.content) axpy(c, gt.atom(id), acc);
  std::vector<float> out(gt.d);
  for (std::uint32_t j = 0; j < gt.d; ++j) out[j] = static_cast<float>(acc[j]);
  return out;
}

std::vector<float> always_on_component(const GroundTruth& gt,
                                       const ItemLabel& label) {
  std::vector<double> acc(gt.d, 0.0);
  for (const auto& [id, c] : label.always_on) axpy(c, gt.atom(id), acc);
  std::vector<float> out(gt.d);
  for (std::uint32_t j = 0; j < gt.d; ++j) out[j] = static_cast<float>(acc[j]);
  return out;
}

MatchReport match_atoms(const SaeModel& model, const GroundTruth& gt,
                        double cosine_threshold) {
  if (model.d != gt.d) throw ShapeError("model d != ground-truth d");
  MatchReport report;
  report.cosine_threshold = cosine_threshold;
  report.per_atom.resize(gt.n_atoms);
  std::unordered_map<std::uint32_t, std::size_t> hits;
  std::size_t recovered = 0;
  for (std::uint32_t a = 0; a < gt.n_atoms; ++a) {
    AtomMatch best;
    for (std::uint32_t r = 0; r < model.omega; ++r) {
      const double c = std::abs(cosine(model.dec_row(r), gt.atom(a)));
      if (c > best.abs_cosine) {
        best.abs_cosine = c;
        best.best_row = r;
      }
    }
    report.per_atom[a] = best;
    hits[best.best_row] += 1;
    if (best.abs_cosine >= cosine_threshold) ++recovered;
  }
  report.recovery_rate =
      static_cast<double>(recovered) / static_cast<double>(gt.n_atoms);
  for (const auto& [row, times] : hits) {
    if (times > 1) report.injectivity_violations += times - 1;
  }
  return report;
}

DetectionScore score_detection(const SaeModel& model, const GroundTruth& gt,
                               const NeuronCatalog& catalog,
                               std::span<const ItemLabel> labels,
                               double proj_threshold) {
  DetectionScore score;
  score.detected = catalog.always_on;

  std::vector<std::span<const float>> planted;
  for (const auto id : gt.always_on_ids) planted.push_back(gt.atom(id));
  const auto planted_basis = orthonormal_basis(planted);

  std::size_t in_span = 0;
  for (const auto id : score.detected) {
    const double frac = projection_fraction(model.dec_row(id), planted_basis);
    score.detected_projection.push_back(frac);
    if (frac >= proj_threshold) ++in_span;
    double appearance = 0.0;
    for (const auto& s : catalog.neurons) {
      if (s.id == id) {
        appearance = s.appearance_fraction;
        break;
      }
    }
    score.detected_appearance.push_back(appearance);
  }
  score.precision =
      score.detected.empty()
          ? 1.0
          : static_cast<double>(in_span) /
                static_cast<double>(score.detected.size());

  // Per planted atom, the best |cosine| over the detected rows, reported so
  // the subspace-level matching stays inspectable.
  for (const auto aid : gt.always_on_ids) {
    double best = 0.0;
    for (const auto did : score.detected) {
      best = std::max(best, std::abs(cosine(model.dec_row(did), gt.atom(aid))));
    }
    score.planted_atom_best_cosine.push_back(best);
  }

  std::vector<std::span<const float>> detected_rows;
  for (const auto id : score.detected) detected_rows.push_back(model.dec_row(id));
  const auto detected_basis = orthonormal_basis(detected_rows);

  if (gt.always_on_ids.empty()) {
    score.recall = 1.0;
    return score;
  }
  if (score.detected.empty()) {
    score.recall = 0.0;
    return score;
  }
  std::size_t captured = 0;
  for (const auto& label : labels) {
    const auto comp = always_on_component(gt, label);
    if (projection_fraction(comp, detected_basis) >= proj_threshold) {
      ++captured;
    }
  }
  score.recall = labels.empty() ? 0.0
                                : static_cast<double>(captured) /
                                      static_cast<double>(labels.size());
  return score;
}

ZeroingReport zeroing_experiment(const SaeModel& model,
                                 const EmbeddingMatrix& data,
                                 const NeuronCatalog& catalog,
                                 std::uint64_t seed) {
  if (data.count == 0) throw InvalidArgument("empty dataset");
  if (catalog.omega != model.omega) {
    throw ShapeError("catalog latent width != model omega");
  }
  ZeroingReport rep;
  for (std::size_t i = 0; i < data.count; ++i) {
    const auto v = data.row(i);
    const auto z = encode_topk(model, v);

    rep.baseline += item_error(model, v, z);
    rep.zero_always_on += item_error(model, v, zero_neurons(z, catalog.always_on));

    std::vector<std::uint32_t> image_specific;
    for (const auto& [idx, val] : z.entries) {
      if (!catalog.is_always_on(idx)) image_specific.push_back(idx);
    }
    rep.zero_image_specific +=
        item_error(model, v, zero_neurons(z, image_specific));

    // Equal-count random neurons that are neither always-on nor active for
    // this item ("beyond the top-k" in catalog terms).
    std::unordered_set<std::uint32_t> excluded(catalog.always_on.begin(),
                                               catalog.always_on.end());
    for (const auto& [idx, val] : z.entries) excluded.insert(idx);
    Rng rng(derive_seed(seed, i));
    std::unordered_set<std::uint32_t> random_ids;
    const std::size_t want =
        std::min(image_specific.size(),
                 static_cast<std::size_t>(model.omega) - excluded.size());
    while (random_ids.size() < want) {
      const auto cand =
          static_cast<std::uint32_t>(rng.uniform_below(model.omega));
      if (!excluded.count(cand)) random_ids.insert(cand);
    }
    std::vector<std::uint32_t> random_list(random_ids.begin(),
                                           random_ids.end());
    rep.zero_random += item_error(model, v, zero_neurons(z, random_list));
  }
  const double n = static_cast<double>(data.count);
  rep.baseline /= n;
  rep.zero_always_on /= n;
  rep.zero_image_specific /= n;
  rep.zero_random /= n;
  return rep;
}

CnsBenefitReport cns_benefit(const SaeModel& model, const GroundTruth& gt,
                             const EmbeddingMatrix& data,
                             std::span<const ItemLabel> labels,
                             const NeuronCatalog& catalog,
                             const SteeringPlan& plan,
                             const NoiseSchedule& schedule, std::uint64_t seed,
                             bool use_ans) {
  if (data.count == 0) throw InvalidArgument("empty dataset");
  if (labels.size() != data.count) {
    throw ShapeError("labels length != dataset count");
  }
  plan.validate(model.omega);
  CnsBenefitReport rep;
  std::size_t improved = 0;
  for (std::size_t i = 0; i < data.count; ++i) {
    const auto v = data.row(i);
    const auto content = content_component(gt, labels[i]);
    const auto z_clean = apply_edits(encode_topk(model, v), plan);
    const auto recon_base = decode(model, z_clean);

    const auto noisy =
        perturb(v, plan.noise_step, schedule, derive_seed(seed, i));
    const auto z_noisy = encode_topk(model, noisy);
    auto delta = contrastive_delta(z_clean, z_noisy);
    if (use_ans) delta = apply_ans(std::move(delta), catalog.always_on);
    const auto steered = cns_steer(z_clean, delta, plan.lambda);
    const auto recon_steer = decode_dense(model, steered.values);

    const double cos_base = cosine(content, recon_base);
    const double cos_steer = cosine(content, recon_steer);
    rep.mean_cosine_baseline += cos_base;
    rep.mean_cosine_steered += cos_steer;
    rep.mean_improvement += cos_steer - cos_base;
    if (cos_steer > cos_base) ++improved;
  }
  const double n = static_cast<double>(data.count);
  rep.mean_cosine_baseline /= n;
  rep.mean_cosine_steered /= n;
  rep.mean_improvement /= n;
  rep.fraction_improved = static_cast<double>(improved) / n;
  return rep;
}

OracleEvaluation evaluate_oracle(const SaeModel& model, const GroundTruth& gt,
                                 const EmbeddingMatrix& data,
                                 std::span<const ItemLabel> labels,
                                 const NoiseSchedule& schedule,
                                 const OracleEvalParams& params) {
  OracleEvaluation eval;
  eval.match = match_atoms(model, gt, params.recovery_cosine);
  const auto ledger = build_ledger(model, data, params.k_record);
  eval.catalog = detect_always_on(ledger, params.detection_threshold);
  eval.detection = score_detection(model, gt, eval.catalog, labels,
                                   params.projection_threshold);
  eval.zeroing = zeroing_experiment(model, data, eval.catalog,
                                    derive_seed(params.seed, 0x2e70));
  eval.change_curve = change_ratio_curve(model, data, params.curve_steps,
                                         schedule, model.k,
                                         derive_seed(params.seed, 0xc04e));
  SteeringPlan plan;
  plan.lambda = params.lambda;
  plan.noise_step = params.noise_step;
  const auto cns_seed = derive_seed(params.seed, 0xc25);
  eval.cns = cns_benefit(model, gt, data, labels, eval.catalog, plan, schedule,
                         cns_seed, true);
  eval.cns_no_ans = cns_benefit(model, gt, data, labels, eval.catalog, plan,
                                schedule, cns_seed, false);
  return eval;
}

nlohmann::json evaluation_to_json(const OracleEvaluation& eval) {
  nlohmann::json j;
  auto& match = j["recovery"];
  match["rate"] = eval.match.recovery_rate;
  match["cosine_threshold"] = eval.match.cosine_threshold;
  match["injectivity_violations"] = eval.match.injectivity_violations;
  auto& per_atom = match["per_atom"] = nlohmann::json::array();
  for (const auto& m : eval.match.per_atom) {
    per_atom.push_back({{"row", m.best_row}, {"abs_cosine", m.abs_cosine}});
  }

  auto& det = j["detection"];
  det["always_on"] = eval.detection.detected;
  det["precision"] = eval.detection.precision;
  det["recall"] = eval.detection.recall;
  det["detected_projection"] = eval.detection.detected_projection;
  det["detected_appearance"] = eval.detection.detected_appearance;
  det["planted_atom_best_cosine"] = eval.detection.planted_atom_best_cosine;

  auto& zero = j["zeroing"];
  zero["baseline"] = eval.zeroing.baseline;
  zero["zero_always_on"] = eval.zeroing.zero_always_on;
  zero["zero_image_specific"] = eval.zeroing.zero_image_specific;
  zero["zero_random"] = eval.zeroing.zero_random;
  zero["ratio_always_on"] = eval.zeroing.ratio_always_on();
  zero["ratio_image_specific"] = eval.zeroing.ratio_image_specific();
  zero["ratio_random"] = eval.zeroing.ratio_random();

  auto& curve = j["change_ratio_curve"] = nlohmann::json::array();
  for (const auto& [t, mean] : eval.change_curve) {
    curve.push_back({t, mean});
  }

  const auto cns_json = [](const CnsBenefitReport& r) {
    return nlohmann::json{{"mean_improvement", r.mean_improvement},
                          {"fraction_improved", r.fraction_improved},
                          {"mean_cosine_baseline", r.mean_cosine_baseline},
                          {"mean_cosine_steered", r.mean_cosine_steered}};
  };
  j["cns_benefit"] = cns_json(eval.cns);
  j["cns_benefit_no_ans"] = cns_json(eval.cns_no_ans);
  return j;
}

void write_ground_truth(const GroundTruth& gt,
                        const std::filesystem::path& json_path,
                        const std::filesystem::path& atoms_path) {
  EmbeddingMatrix atoms;
  atoms.count = gt.n_atoms;
  atoms.dim = gt.d;
  atoms.values = gt.atoms;
  write_embeddings(atoms, atoms_path);

  nlohmann::json j;
  j["d"] = gt.d;
  j["n_atoms"] = gt.n_atoms;
  j["always_on_ids"] = gt.always_on_ids;
  j["content_ids"] = gt.content_ids;
  j["atoms_file"] = atoms_path.filename().string();
  j["params"] = {{"k_true", gt.params.k_true},
                 {"always_on_strength", gt.params.always_on_strength},
                 {"always_on_jitter", gt.params.always_on_jitter},
                 {"content_low", gt.params.content_low},
                 {"content_high", gt.params.content_high},
                 {"noise_sigma", gt.params.noise_sigma},
                 {"coherence_cap", gt.params.coherence_cap}};
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + json_path.string());
  out << j.dump(2) << '\n';
}

GroundTruth read_ground_truth(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot open " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile("bad ground-truth JSON: " + std::string(e.what()));
  }
  GroundTruth gt;
  gt.d = j.at("d").get<std::uint32_t>();
  gt.n_atoms = j.at("n_atoms").get<std::uint32_t>();
  gt.always_on_ids = j.at("always_on_ids").get<std::vector<std::uint32_t>>();
  gt.content_ids = j.at("content_ids").get<std::vector<std::uint32_t>>();
  const auto& p = j.at("params");
  gt.params.k_true = p.at("k_true").get<std::uint32_t>();
  gt.params.always_on_strength = p.at("always_on_strength").get<double>();
  gt.params.always_on_jitter = p.at("always_on_jitter").get<double>();
  gt.params.content_low = p.at("content_low").get<double>();
  gt.params.content_high = p.at("content_high").get<double>();
  gt.params.noise_sigma = p.at("noise_sigma").get<double>();
  gt.params.coherence_cap = p.at("coherence_cap").get<double>();

  const auto atoms_path =
      json_path.parent_path() / j.at("atoms_file").get<std::string>();
  const auto atoms = read_embeddings(atoms_path);
  if (atoms.count != gt.n_atoms || atoms.dim != gt.d) {
    throw CorruptFile("atoms file shape disagrees with ground-truth JSON");
  }
  gt.atoms = atoms.values;
  return gt;
}

void write_labels(std::span<const ItemLabel> labels,
                  const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& label : labels) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& [id, c] : label.content) content.push_back({id, c});
    nlohmann::json always = nlohmann::json::array();
    for (const auto& [id, c] : label.always_on) always.push_back({id, c});
    arr.push_back({{"content", std::move(content)},
                   {"always_on", std::move(always)}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string());
  out << arr.dump() << '\n';
}

std::vector<ItemLabel> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json arr;
  try {
    in >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile("bad labels JSON: " + std::string(e.what()));
  }
  std::vector<ItemLabel> labels;
  for (const auto& item : arr) {
    ItemLabel label;
    for (const auto& pair : item.at("content")) {
      label.content.emplace_back(pair.at(0).get<std::uint32_t>(),
                                 pair.at(1).get<float>());
    }
    for (const auto& pair : item.at("always_on")) {
      label.always_on.emplace_back(pair.at(0).get<std::uint32_t>(),
                                   pair.at(1).get<float>());
    }
    labels.push_back(std::move(label));
  }
  return labels;
}

}  // namespace neuronscope
