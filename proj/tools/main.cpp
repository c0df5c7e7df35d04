// neuronscope command-line front-end: synth | train | encode | analyze |
// perturb | steer | report | sweep. Every stochastic path takes an explicit
// seed, so identical invocations produce identical artifacts.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
// failure (non-finite loss).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "neuronscope/analysis.hpp"
#include "neuronscope/embedding.hpp"
#include "neuronscope/errors.hpp"
#include "neuronscope/noise.hpp"
#include "neuronscope/parallel.hpp"
#include "neuronscope/rng.hpp"
#include "neuronscope/sae.hpp"
#include "neuronscope/steering.hpp"
#include "neuronscope/synthetic.hpp"
#include "neuronscope/train.hpp"

#include "log.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace neuronscope;

namespace {

void require_input(const fs::path& path) {
  if (!fs::exists(path)) {
    throw IoError("input file does not exist: " + path.string());
  }
}

void write_json_file(const json& j, const fs::path& path, int indent = 2) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(indent) << '\n';
}

std::string item_name(const EmbeddingMatrix& m, std::size_t i) {
  return m.has_ids() ? m.item_ids[i] : std::to_string(i);
}

struct ScheduleFlags {
  std::uint32_t total_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;

  void attach(CLI::App* cmd) {
    cmd->add_option("--schedule-steps", total_steps,
                    "Total steps in the noise schedule");
    cmd->add_option("--beta-start", beta_start, "First beta of the schedule");
    cmd->add_option("--beta-end", beta_end, "Last beta of the schedule");
  }
  NoiseSchedule build() const {
    return build_schedule(total_steps, beta_start, beta_end);
  }
};

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  std::string from_ground_truth;
  std::uint32_t d = 64;
  std::uint32_t n_atoms = 256;
  std::uint32_t n_always_on = 10;
  std::size_t n_items = 2000;
  std::uint64_t seed = 7;
  GroundTruthParams params;
};

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  GroundTruth gt;
  if (!a.from_ground_truth.empty()) {
    require_input(a.from_ground_truth);
    gt = read_ground_truth(a.from_ground_truth);
    NSCLI_INFO("reusing ground truth from %s", a.from_ground_truth.c_str());
  } else {
    NSCLI_INFO("generating ground truth: d=%u atoms=%u always-on=%u", a.d,
               a.n_atoms, a.n_always_on);
    gt = gen_ground_truth(a.d, a.n_atoms, a.n_always_on, a.seed, a.params);
  }
  write_ground_truth(gt, dir / "ground_truth.json", dir / "atoms.emb");

  NSCLI_INFO("sampling %zu items", a.n_items);
  auto ds = gen_dataset(gt, a.n_items, derive_seed(a.seed, 0xda7a));
  write_embeddings(ds.data, dir / "data.emb");
  write_labels(ds.labels, dir / "labels.json");
  NSCLI_INFO("wrote %s/{ground_truth.json,atoms.emb,data.emb,labels.json}",
             a.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data_path;
  std::string out_path;
  std::string report_path;
  std::uint64_t checkpoint_every = 0;
  TrainConfig cfg;
};

json report_to_json(const TrainReport& report, const SaeModel& model,
                    const TrainConfig& cfg) {
  json curve = json::array();
  for (const auto& [step, loss] : report.loss_curve) {
    curve.push_back({step, loss});
  }
  return json{{"loss_curve", std::move(curve)},
              {"final_loss", report.final_loss},
              {"dead_neuron_count", report.dead_neuron_count},
              {"wall_clock_seconds", report.wall_clock_seconds},
              {"batch_topk_threshold", report.batch_topk_threshold},
              {"config",
               {{"k", cfg.k},
                {"expansion_factor", cfg.expansion_factor},
                {"steps", cfg.steps},
                {"batch_size", cfg.batch_size},
                {"lr", cfg.adam_params(model.omega).lr},
                {"seed", cfg.seed},
                {"dead_neuron_window", cfg.dead_neuron_window},
                {"groups", model.groups}}}};
}

int run_train(const TrainArgs& a) {
  require_input(a.data_path);
  const auto data = read_embeddings(a.data_path);
  NSCLI_INFO("training on %zu x %zu embeddings, %llu steps", data.count,
             data.dim, static_cast<unsigned long long>(a.cfg.steps));

  TrainProgressFn progress = [&](std::uint64_t step, const SaeModel& model,
                                 double loss) {
    NSCLI_DEBUG("step %llu loss %.6g", static_cast<unsigned long long>(step),
                loss);
    if (a.checkpoint_every > 0 && step % a.checkpoint_every == 0 &&
        step != a.cfg.steps) {
      const auto path = a.out_path + ".step" + std::to_string(step);
      save_model(model, path);
      NSCLI_INFO("checkpoint %s", path.c_str());
    }
  };
  auto [model, report] = train(data, a.cfg, progress);
  save_model(model, a.out_path);

  const auto report_path =
      a.report_path.empty() ? a.out_path + ".report.json" : a.report_path;
  write_json_file(report_to_json(report, model, a.cfg), report_path);
  NSCLI_INFO("final loss %.6g, wrote %s and %s", report.final_loss,
             a.out_path.c_str(), report_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

struct EncodeArgs {
  std::string model_path;
  std::string data_path;
  std::string out_path;
  std::string recon_path;
  std::uint32_t k = 0;  // 0: model default
  std::optional<double> threshold;
};

int run_encode(const EncodeArgs& a) {
  require_input(a.model_path);
  require_input(a.data_path);
  const auto model = load_model(a.model_path);
  const auto data = read_embeddings(a.data_path);

  json codes = json::array();
  EmbeddingMatrix recon;
  const bool want_recon = !a.recon_path.empty();
  if (want_recon) {
    recon.count = data.count;
    recon.dim = model.d;
    recon.values.resize(data.count * model.d);
    recon.item_ids = data.item_ids;
  }
  for (std::size_t i = 0; i < data.count; ++i) {
    const auto z =
        a.threshold.has_value()
            ? encode_threshold(model, data.row(i),
                               static_cast<float>(*a.threshold))
            : encode_topk(model, data.row(i), a.k == 0 ? model.k : a.k);
    json entries = json::array();
    for (const auto& [idx, val] : z.entries) entries.push_back({idx, val});
    codes.push_back({{"item", item_name(data, i)},
                     {"entries", std::move(entries)}});
    if (want_recon) {
      const auto vhat = decode(model, z);
      std::copy(vhat.begin(), vhat.end(), recon.values.begin() + i * model.d);
    }
  }
  json j{{"omega", model.omega},
         {"k", a.threshold.has_value() ? 0 : (a.k == 0 ? model.k : a.k)},
         {"codes", std::move(codes)}};
  if (a.threshold.has_value()) j["threshold"] = *a.threshold;
  write_json_file(j, a.out_path);
  if (want_recon) write_embeddings(recon, a.recon_path);
  NSCLI_INFO("encoded %zu items -> %s", data.count, a.out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string model_path;
  std::string data_path;
  std::string out_path;
  std::uint32_t k_record = 20;
  double threshold = 1.0;
  std::string level = "image";
};

int run_analyze(const AnalyzeArgs& a) {
  require_input(a.model_path);
  require_input(a.data_path);
  const auto model = load_model(a.model_path);
  const auto data = read_embeddings(a.data_path);
  const auto level =
      a.level == "patch" ? LedgerLevel::patch : LedgerLevel::image;
  const auto ledger = build_ledger(model, data, a.k_record, level);
  const auto catalog = detect_always_on(ledger, a.threshold);
  write_analysis(ledger, catalog, a.out_path);
  NSCLI_INFO("%zu records, %zu always-on neurons -> %s", ledger.records.size(),
             catalog.always_on.size(), a.out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// perturb
// ---------------------------------------------------------------------------

struct PerturbArgs {
  std::string data_path;
  std::string out_path;
  std::uint32_t noise_step = 500;
  std::uint64_t seed = 0;
  ScheduleFlags schedule;
};

int run_perturb(const PerturbArgs& a) {
  require_input(a.data_path);
  const auto data = read_embeddings(a.data_path);
  const auto schedule = a.schedule.build();
  const auto noisy = perturb_matrix(data, a.noise_step, schedule, a.seed);
  write_embeddings(noisy, a.out_path);
  write_json_file(json{{"t", a.noise_step},
                       {"seed", a.seed},
                       {"schedule",
                        {{"total_steps", schedule.total_steps},
                         {"beta_start", schedule.beta_start},
                         {"beta_end", schedule.beta_end}}}},
                  a.out_path + ".meta.json");
  NSCLI_INFO("perturbed %zu items at t=%u -> %s", data.count, a.noise_step,
             a.out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// steer
// ---------------------------------------------------------------------------

struct SteerArgs {
  std::string model_path;
  std::string clean_path;
  std::string noisy_path;
  std::string catalog_path;
  std::string plan_path;
  std::string out_path;
  std::string log_path;
  std::optional<double> lambda;
  std::optional<std::uint32_t> noise_step;
  std::uint64_t seed = 0;
  ScheduleFlags schedule;
};

int run_steer(const SteerArgs& a) {
  require_input(a.model_path);
  require_input(a.clean_path);
  require_input(a.catalog_path);
  if (!a.noisy_path.empty()) require_input(a.noisy_path);
  if (!a.plan_path.empty()) require_input(a.plan_path);

  const auto model = load_model(a.model_path);
  const auto clean = read_embeddings(a.clean_path);
  const auto catalog = read_catalog(a.catalog_path);
  if (catalog.omega != model.omega) {
    throw ShapeError("catalog latent width " + std::to_string(catalog.omega) +
                     " != model omega " + std::to_string(model.omega));
  }

  SteeringPlan plan;
  if (!a.plan_path.empty()) plan = read_plan(a.plan_path);
  if (a.lambda.has_value()) plan.lambda = *a.lambda;
  if (a.noise_step.has_value()) plan.noise_step = *a.noise_step;
  plan.validate(model.omega);

  const bool noisy_from_file = !a.noisy_path.empty();
  EmbeddingMatrix noisy;
  if (noisy_from_file) {
    noisy = read_embeddings(a.noisy_path);
    if (noisy.count != clean.count || noisy.dim != clean.dim) {
      throw ShapeError("noisy embeddings shape differs from clean");
    }
  } else {
    noisy = perturb_matrix(clean, plan.noise_step, a.schedule.build(), a.seed);
  }

  EmbeddingMatrix steered;
  steered.count = clean.count;
  steered.dim = model.d;
  steered.values.resize(clean.count * model.d);
  steered.item_ids = clean.item_ids;

  json items = json::array();
  for (std::size_t i = 0; i < clean.count; ++i) {
    const auto z_clean = encode_topk(model, clean.row(i));
    const auto z_edited = apply_edits(z_clean, plan);
    const auto z_noisy = encode_topk(model, noisy.row(i));
    const auto delta =
        apply_ans(contrastive_delta(z_edited, z_noisy), catalog.always_on);
    const auto steered_code = cns_steer(z_edited, delta, plan.lambda);
    const auto out_vec = decode_dense(model, steered_code.values);
    std::copy(out_vec.begin(), out_vec.end(),
              steered.values.begin() + i * model.d);
    items.push_back({{"item", item_name(clean, i)},
                     {"delta_k", change_ratio(z_clean, z_noisy, model.k)}});
  }
  write_embeddings(steered, a.out_path);

  json log{{"lambda", plan.lambda},
           {"k", model.k},
           {"ans", true},
           {"edits", plan_to_json(plan)["edits"]},
           {"items", std::move(items)}};
  if (noisy_from_file) {
    log["noise_step"] = nullptr;
    log["noisy_file"] = a.noisy_path;
  } else {
    log["noise_step"] = plan.noise_step;
    log["seed"] = a.seed;
  }
  const auto log_path =
      a.log_path.empty() ? a.out_path + ".log.json" : a.log_path;
  write_json_file(log, log_path);
  NSCLI_INFO("steered %zu items (lambda=%.3g) -> %s", clean.count, plan.lambda,
             a.out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// report / sweep
// ---------------------------------------------------------------------------

struct OracleArgs {
  std::string model_path;
  std::string gt_path;
  std::string data_path;
  std::string labels_path;
  std::string out_path;
  OracleEvalParams params;
  ScheduleFlags schedule;
  std::vector<std::uint32_t> t_list;
  std::vector<double> lambda_list;
};

struct OracleInputs {
  SaeModel model;
  GroundTruth gt;
  EmbeddingMatrix data;
  std::vector<ItemLabel> labels;
};

OracleInputs load_oracle_inputs(const OracleArgs& a) {
  require_input(a.model_path);
  require_input(a.gt_path);
  require_input(a.data_path);
  require_input(a.labels_path);
  OracleInputs in;
  in.model = load_model(a.model_path);
  in.gt = read_ground_truth(a.gt_path);
  in.data = read_embeddings(a.data_path);
  in.labels = read_labels(a.labels_path);
  if (in.labels.size() != in.data.count) {
    throw ShapeError("labels count != dataset count");
  }
  if (in.model.d != in.gt.d || in.data.dim != in.model.d) {
    throw ShapeError("model, ground truth and data dims disagree");
  }
  return in;
}

int run_report(const OracleArgs& a) {
  const auto in = load_oracle_inputs(a);
  const auto eval = evaluate_oracle(in.model, in.gt, in.data, in.labels,
                                    a.schedule.build(), a.params);
  write_json_file(evaluation_to_json(eval), a.out_path);
  NSCLI_INFO("recovery %.3f, detected %zu always-on, cns improvement %.4g -> %s",
             eval.match.recovery_rate, eval.detection.detected.size(),
             eval.cns.mean_improvement, a.out_path.c_str());
  return 0;
}

int run_sweep(const OracleArgs& a) {
  const auto in = load_oracle_inputs(a);
  const auto schedule = a.schedule.build();
  const auto ledger = build_ledger(in.model, in.data, a.params.k_record);
  const auto catalog = detect_always_on(ledger, a.params.detection_threshold);

  json mean_grid = json::array();
  json frac_grid = json::array();
  for (const auto t : a.t_list) {
    json mean_row = json::array();
    json frac_row = json::array();
    for (const auto lambda : a.lambda_list) {
      SteeringPlan plan;
      plan.lambda = lambda;
      plan.noise_step = t;
      const auto rep = cns_benefit(in.model, in.gt, in.data, in.labels,
                                   catalog, plan, schedule,
                                   derive_seed(a.params.seed, 0xc25), true);
      mean_row.push_back(rep.mean_improvement);
      frac_row.push_back(rep.fraction_improved);
    }
    mean_grid.push_back(std::move(mean_row));
    frac_grid.push_back(std::move(frac_row));
  }
  write_json_file(json{{"t_values", a.t_list},
                       {"lambda_values", a.lambda_list},
                       {"metric", "mean_improvement"},
                       {"mean_improvement", std::move(mean_grid)},
                       {"fraction_improved", std::move(frac_grid)}},
                  a.out_path);
  NSCLI_INFO("swept %zu x %zu grid -> %s", a.t_list.size(),
             a.lambda_list.size(), a.out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neuronscope: matryoshka batch-top-k sparse autoencoders for "
               "embedding analysis and contrastive neuron steering"};
  app.require_subcommand(1);

  std::string log_level_name = "info";
  app.add_option("--log-level", log_level_name,
                 "error | warn | info | debug (env NEURON_SCOPE_LOG wins)");
  unsigned threads = 0;

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-dictionary dataset");
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--from-ground-truth", synth.from_ground_truth,
                        "Reuse an existing ground_truth.json instead of "
                        "generating a new dictionary");
  synth_cmd->add_option("--d", synth.d, "Embedding dimension");
  synth_cmd->add_option("--n-atoms", synth.n_atoms, "Number of planted atoms");
  synth_cmd->add_option("--n-always-on", synth.n_always_on, "Always-on atoms");
  synth_cmd->add_option("--n-items", synth.n_items, "Dataset size");
  synth_cmd->add_option("--k-true", synth.params.k_true, "Content atoms per item");
  synth_cmd->add_option("--sigma", synth.params.noise_sigma, "Ambient noise scale");
  synth_cmd->add_option("--always-on-strength", synth.params.always_on_strength,
                        "Center of the always-on coefficient band");
  synth_cmd->add_option("--always-on-jitter", synth.params.always_on_jitter,
                        "Relative half-width of the always-on band (0 = constant)");
  synth_cmd->add_option("--content-low", synth.params.content_low, "Content coeff low");
  synth_cmd->add_option("--content-high", synth.params.content_high, "Content coeff high");
  synth_cmd->add_option("--coherence-cap", synth.params.coherence_cap,
                        "Max |cosine| between distinct atoms");
  synth_cmd->add_option("--seed", synth.seed, "RNG seed");

  TrainArgs train_args;
  std::vector<double> group_fractions;
  auto* train_cmd = app.add_subcommand("train", "Train a sparse autoencoder");
  train_cmd->add_option("--data", train_args.data_path, "EMB1 or CSV embeddings")->required();
  train_cmd->add_option("--out", train_args.out_path, "Output SAE1 checkpoint")->required();
  train_cmd->add_option("--report", train_args.report_path,
                        "Report JSON path (default <out>.report.json)");
  train_cmd->add_option("--steps", train_args.cfg.steps, "Training steps");
  train_cmd->add_option("--k", train_args.cfg.k, "Active latents per sample");
  train_cmd->add_option("--expansion", train_args.cfg.expansion_factor,
                        "Latent width as a multiple of d");
  train_cmd->add_option("--batch-size", train_args.cfg.batch_size, "Batch size");
  train_cmd->add_option("--lr", train_args.cfg.lr,
                        "Learning rate (<= 0 uses 16/(125*sqrt(omega)))");
  train_cmd->add_option("--groups", group_fractions,
                        "Matryoshka group fractions of omega")->delimiter(',');
  train_cmd->add_option("--seed", train_args.cfg.seed, "RNG seed");
  train_cmd->add_option("--dead-window", train_args.cfg.dead_neuron_window,
                        "Steps between dead-neuron sweeps (0 disables)");
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every,
                        "Write intermediate checkpoints every N steps");
  std::string decoder_bias_mode = "trained";
  train_cmd->add_option("--decoder-bias", decoder_bias_mode,
                        "trained | frozen | zero")
      ->check(CLI::IsMember({"trained", "frozen", "zero"}));

  EncodeArgs encode_args;
  double encode_threshold_value = 0.0;
  auto* encode_cmd = app.add_subcommand("encode", "Encode embeddings to sparse codes");
  encode_cmd->add_option("--model", encode_args.model_path, "SAE1 checkpoint")->required();
  encode_cmd->add_option("--data", encode_args.data_path, "Embeddings")->required();
  encode_cmd->add_option("--out", encode_args.out_path, "Codes JSON")->required();
  encode_cmd->add_option("--recon", encode_args.recon_path,
                         "Also write reconstructions as EMB1");
  encode_cmd->add_option("--k", encode_args.k, "Override sparsity (0 = model K)");
  auto* thr_opt = encode_cmd->add_option("--threshold", encode_threshold_value,
                                         "Threshold-mode inference cut");

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Build an activation ledger and catalog");
  analyze_cmd->add_option("--model", analyze_args.model_path, "SAE1 checkpoint")->required();
  analyze_cmd->add_option("--data", analyze_args.data_path, "Embeddings")->required();
  analyze_cmd->add_option("--out", analyze_args.out_path, "Analysis JSON")->required();
  analyze_cmd->add_option("--k-record", analyze_args.k_record, "Entries recorded per item");
  analyze_cmd->add_option("--threshold", analyze_args.threshold,
                          "Always-on appearance threshold");
  analyze_cmd->add_option("--level", analyze_args.level, "image | patch")
      ->check(CLI::IsMember({"image", "patch"}));

  PerturbArgs perturb_args;
  auto* perturb_cmd = app.add_subcommand("perturb", "Noise embeddings at step t");
  perturb_cmd->add_option("--data", perturb_args.data_path, "Clean embeddings")->required();
  perturb_cmd->add_option("--out", perturb_args.out_path, "Noisy EMB1 output")->required();
  perturb_cmd->add_option("--noise-step", perturb_args.noise_step, "Noise step t");
  perturb_cmd->add_option("--seed", perturb_args.seed, "RNG seed");
  perturb_args.schedule.attach(perturb_cmd);

  SteerArgs steer_args;
  double steer_lambda = 0.0;
  std::uint32_t steer_t = 0;
  auto* steer_cmd = app.add_subcommand("steer", "Contrastive neuron steering");
  steer_cmd->add_option("--model", steer_args.model_path, "SAE1 checkpoint")->required();
  steer_cmd->add_option("--clean", steer_args.clean_path, "Clean embeddings")->required();
  steer_cmd->add_option("--catalog", steer_args.catalog_path,
                        "Analysis/catalog JSON with the always-on set")->required();
  steer_cmd->add_option("--out", steer_args.out_path, "Steered EMB1 output")->required();
  steer_cmd->add_option("--noisy", steer_args.noisy_path,
                        "Noisy embeddings (else generated via --noise-step)");
  steer_cmd->add_option("--plan", steer_args.plan_path, "Steering plan JSON");
  auto* lam_opt = steer_cmd->add_option("--lambda", steer_lambda, "Steering strength");
  auto* st_opt = steer_cmd->add_option("--noise-step", steer_t, "Noise step t");
  steer_cmd->add_option("--seed", steer_args.seed, "RNG seed for generated noise");
  steer_cmd->add_option("--log", steer_args.log_path,
                        "Per-item log JSON (default <out>.log.json)");
  steer_args.schedule.attach(steer_cmd);

  OracleArgs report_args;
  auto add_oracle_inputs = [](CLI::App* cmd, OracleArgs& a) {
    cmd->add_option("--model", a.model_path, "SAE1 checkpoint")->required();
    cmd->add_option("--ground-truth", a.gt_path, "ground_truth.json")->required();
    cmd->add_option("--data", a.data_path, "Evaluation embeddings")->required();
    cmd->add_option("--labels", a.labels_path, "labels.json")->required();
    cmd->add_option("--out", a.out_path, "Output JSON")->required();
    cmd->add_option("--k-record", a.params.k_record, "Ledger entries per item");
    cmd->add_option("--threshold", a.params.detection_threshold,
                    "Always-on appearance threshold");
    cmd->add_option("--seed", a.params.seed, "RNG seed");
  };
  auto* report_cmd = app.add_subcommand(
      "report", "Score a trained model against planted ground truth");
  add_oracle_inputs(report_cmd, report_args);
  report_cmd->add_option("--lambda", report_args.params.lambda, "Steering strength");
  report_cmd->add_option("--noise-step", report_args.params.noise_step, "Noise step t");
  report_cmd->add_option("--curve-steps", report_args.params.curve_steps,
                         "Noise steps for the change-ratio curve")->delimiter(',');
  report_cmd->add_option("--recovery-cosine", report_args.params.recovery_cosine,
                         "Atom recovery |cosine| threshold");
  report_cmd->add_option("--projection-threshold",
                         report_args.params.projection_threshold,
                         "Always-on subspace projection threshold");
  report_args.schedule.attach(report_cmd);

  OracleArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "Grid of CNS benefit over noise step and steering strength");
  add_oracle_inputs(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--t-list", sweep_args.t_list, "Noise steps")
      ->delimiter(',')->required();
  sweep_cmd->add_option("--lambda-list", sweep_args.lambda_list, "Strengths")
      ->delimiter(',')->required();
  sweep_args.schedule.attach(sweep_cmd);

  app.add_option("--threads", threads, "Worker threads (0 = hardware)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (const char* env = std::getenv("NEURON_SCOPE_LOG")) log_level_name = env;
  if (!nscli::parse_log_level(log_level_name, nscli::log_level())) {
    std::fprintf(stderr, "unknown log level '%s'\n", log_level_name.c_str());
    return 1;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (train_cmd->parsed()) {
      if (!group_fractions.empty()) {
        train_args.cfg.group_fractions = group_fractions;
      }
      if (decoder_bias_mode == "frozen") {
        train_args.cfg.decoder_bias = DecoderBiasMode::frozen;
      } else if (decoder_bias_mode == "zero") {
        train_args.cfg.decoder_bias = DecoderBiasMode::zero;
      }
      train_args.cfg.threads = resolve_threads(threads);
      return run_train(train_args);
    }
    if (encode_cmd->parsed()) {
      if (*thr_opt) encode_args.threshold = encode_threshold_value;
      return run_encode(encode_args);
    }
    if (analyze_cmd->parsed()) return run_analyze(analyze_args);
    if (perturb_cmd->parsed()) return run_perturb(perturb_args);
    if (steer_cmd->parsed()) {
      if (*lam_opt) steer_args.lambda = steer_lambda;
      if (*st_opt) steer_args.noise_step = steer_t;
      return run_steer(steer_args);
    }
    if (report_cmd->parsed()) return run_report(report_args);
    if (sweep_cmd->parsed()) return run_sweep(sweep_args);
  } catch (const NumericError& e) {
    NSCLI_ERROR("%s", e.what());
    return 3;
  } catch (const DataError& e) {
    NSCLI_ERROR("%s", e.what());
    return 2;
  } catch (const std::exception& e) {
    NSCLI_ERROR("%s", e.what());
    return 2;
  }
  return 1;
}
