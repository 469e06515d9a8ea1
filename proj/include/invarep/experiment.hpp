#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invarep/downstream.hpp"
#include "invarep/scenario.hpp"
#include "invarep/upstream.hpp"

namespace invarep {

// Everything a reproducible run needs. The JSON schema mirrors the struct:
// sections "scenario", "upstream", "finetune" plus the top-level scalars
// below. Every key is optional (missing keys keep these defaults), unknown
// keys are rejected, and emit(parse(emit(cfg))) == emit(cfg).
struct ExperimentConfig {
  Scenario scenario = default_scenario();
  UpstreamConfig upstream;
  FinetuneConfig finetune;

  std::size_t n_upstream = 4000;    // upstream sample size
  std::size_t m_downstream = 800;   // downstream sample size
  std::size_t test_draws = 4000;    // fresh draws for test metrics / excess risk
  bool with_baselines = true;
  bool select_reduced_dim = false;  // pick the reduction width on the validation split
  std::vector<std::size_t> sweep_m = {64, 128, 256, 512, 1024, 2048};
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "runs/exp";

  // When set, run_experiment loads these CSVs instead of generating data.
  std::string upstream_csv;
  std::string downstream_csv;
};

// Strict parse: type errors and unknown keys raise ConfigError naming the
// offending key; the scenario is validated after overrides are applied.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);

// One metrics.csv row. Diagnostics refer to the upstream model the method
// saw (the plain-ERM baseline trains its own); dcov is measured between the
// held-out representation rows and the domain one-hot, w1 between a held-out
// representation block and a fresh uniform reference, both seeded from the
// run so reruns are bit-identical.
struct MetricsRow {
  std::string run_id;
  std::string method;  // ours | erm-ud | tir | erm-d | wi
  Task task = Task::regression;
  Regime regime = Regime::partial;
  std::size_t n = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::size_t reduced_dim = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  double excess_risk = 0.0;
  double excess_se = 0.0;
  bool upstream_support_exact = false;
  bool head_support_exact = false;
  double dcov_init = 0.0;
  double dcov_final = 0.0;
  double w1_init = 0.0;
  double w1_final = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

// What run_experiment leaves behind. ok == false means some stage threw; the
// stage name and message are recorded here and in the summary file, and
// whatever was written before the failure stays on disk flagged as partial.
struct ExperimentOutcome {
  bool ok = true;
  std::string failed_stage;
  std::string message;
  std::vector<MetricsRow> rows;
  std::vector<std::string> files;  // paths written, relative to out_dir
};

// Per-seed deterministic draws: exactly the data a run with this config and
// seed consumes (or the loaded CSVs when the config names them).
MultiDomainDataset experiment_upstream_data(const ExperimentConfig& cfg,
                                            std::uint64_t seed);
MultiDomainDataset experiment_downstream_data(const ExperimentConfig& cfg,
                                              std::uint64_t seed);

// The train-up and fine-tune stages as standalone calls on the same seeded
// streams, so chaining them reproduces the corresponding run_experiment
// artifacts bit for bit. Both split their data 8:2 internally and train on
// the front share.
UpstreamResult run_upstream_stage(const ExperimentConfig& cfg, std::uint64_t seed);
FinetuneResult run_finetune_stage(const ExperimentConfig& cfg,
                                  const UpstreamModel& upstream,
                                  std::uint64_t seed);

// Fresh-draw evaluation of a fine-tuned model on the same seeded streams
// run_experiment uses for its metrics rows: the 8:2 downstream split plus a
// fresh test set and the Monte Carlo excess risk.
struct EvalReport {
  Metrics train;
  Metrics val;
  Metrics test;
  ExcessRisk excess;
};
EvalReport evaluate_stage(const ExperimentConfig& cfg, const DownstreamModel& model,
                          std::uint64_t seed);

// Per-epoch training histories in the CSV layout run_experiment writes.
std::string upstream_history_csv(const std::vector<RiskBreakdown>& history);
std::string finetune_history_csv(const std::vector<FinetuneBreakdown>& history);

// Full protocol for one config: generate (or load) data, train upstream,
// fine-tune, evaluate on the held-out 8:2 validation split plus fresh test
// draws, optionally run the baselines, and write metrics.csv, model files,
// per-epoch history CSVs and summary.json under cfg.out_dir.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

// The four §4-style reference methods, all on identical splits and seeds:
// plain-ERM upstream (erm-ud), no auxiliary branch (tir), auxiliary branch
// only with no transfer (erm-d), and no independence penalty (wi).
struct BaselineResult {
  std::string method;
  DownstreamModel model;
  Metrics train;
  Metrics val;
  Metrics test;
  ExcessRisk excess;
};
std::vector<BaselineResult> run_baselines(const UpstreamModel& ours,
                                          const UpstreamModel& erm_upstream,
                                          const MultiDomainDataset& train,
                                          const MultiDomainDataset& val,
                                          const ExperimentConfig& cfg,
                                          std::uint64_t seed);

// Ordinary least squares of log(y) on log(m). slope_se is the usual
// root-mean-square-residual based standard error (needs >= 3 points).
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  std::size_t points = 0;
};
SlopeFit fit_loglog(const std::vector<double>& m, const std::vector<double>& y);

// Excess-risk curve over m for one regime.
struct RegimeSweep {
  Regime regime = Regime::complete;
  std::vector<std::size_t> m;       // sweep grid
  std::vector<double> mean_excess;  // per m, mean over seeds
  SlopeFit fit;                     // log mean excess vs log m
};

// Runs the full method across all three regimes on cfg.sweep_m x cfg.seeds
// (upstream is trained once per seed and shared). Requires at least 4 m
// values spanning 1.5 decades and at least 5 seeds. Writes sweep.csv and
// sweep_summary.json under cfg.out_dir and returns the per-regime fits.
std::vector<RegimeSweep> sweep_m(const ExperimentConfig& cfg);

}  // namespace invarep
