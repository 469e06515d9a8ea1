// Command-line front end. Each subcommand wraps one stage of the experiment
// runner (or the whole protocol), so scripted runs, the tests and the CLI all
// go through the same code paths and produce the same bytes.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "invarep/dataset_io.hpp"
#include "invarep/experiment.hpp"
#include "invarep/model_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON). Defaults apply when omitted.")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Run this single seed instead of the config's seed list.");
  cmd->add_option("--out", o.out, "Output directory. Overrides the config's out_dir.");
}

// Precedence: flags > config file > built-in defaults.
invarep::ExperimentConfig resolve(const CommonOpts& o) {
  invarep::ExperimentConfig cfg;
  if (!o.config.empty()) cfg = invarep::load_experiment_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out.empty()) cfg.out_dir = o.out;
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.flush();
  if (!out) throw invarep::IoError("cannot write " + path.string());
}

std::string seed_tag(std::uint64_t seed) { return "_seed" + std::to_string(seed); }

fs::path default_model_path(const invarep::ExperimentConfig& cfg, const char* stem,
                            std::uint64_t seed) {
  return fs::path(cfg.out_dir) / (stem + seed_tag(seed) + ".json");
}

int cmd_gen(const CommonOpts& o) {
  const auto cfg = resolve(o);
  fs::create_directories(cfg.out_dir);
  for (const std::uint64_t seed : cfg.seeds) {
    const auto up = fs::path(cfg.out_dir) / ("upstream" + seed_tag(seed) + ".csv");
    invarep::save_dataset(invarep::experiment_upstream_data(cfg, seed), up.string());
    std::cout << "wrote " << up.string() << "\n";
    const auto down = fs::path(cfg.out_dir) / ("downstream" + seed_tag(seed) + ".csv");
    invarep::save_dataset(invarep::experiment_downstream_data(cfg, seed), down.string());
    std::cout << "wrote " << down.string() << "\n";
  }
  return 0;
}

int cmd_train_up(const CommonOpts& o) {
  const auto cfg = resolve(o);
  fs::create_directories(cfg.out_dir);
  for (const std::uint64_t seed : cfg.seeds) {
    const invarep::UpstreamResult res = invarep::run_upstream_stage(cfg, seed);
    const fs::path model = default_model_path(cfg, "upstream_model", seed);
    invarep::save_upstream_model(res.model, model.string());
    const fs::path hist = fs::path(cfg.out_dir) / ("upstream_history" + seed_tag(seed) + ".csv");
    write_file(hist, invarep::upstream_history_csv(res.history));
    std::cout << "seed " << seed << ": " << res.history.size() << " epochs, final risk "
              << invarep::format_double(res.history.back().total) << "\n";
    std::cout << "wrote " << model.string() << "\n";
    std::cout << "wrote " << hist.string() << "\n";
  }
  return 0;
}

int cmd_finetune(const CommonOpts& o, const std::string& upstream_path) {
  const auto cfg = resolve(o);
  fs::create_directories(cfg.out_dir);
  for (const std::uint64_t seed : cfg.seeds) {
    const std::string src = upstream_path.empty()
                                ? default_model_path(cfg, "upstream_model", seed).string()
                                : upstream_path;
    const invarep::UpstreamModel up = invarep::load_upstream_model(src);
    const invarep::FinetuneResult res = invarep::run_finetune_stage(cfg, up, seed);
    const fs::path model = default_model_path(cfg, "downstream_model", seed);
    invarep::save_downstream_model(res.model, model.string());
    const fs::path hist = fs::path(cfg.out_dir) / ("finetune_history" + seed_tag(seed) + ".csv");
    write_file(hist, invarep::finetune_history_csv(res.history));
    std::cout << "seed " << seed << ": " << res.history.size() << " epochs, final risk "
              << invarep::format_double(res.history.back().total) << "\n";
    std::cout << "wrote " << model.string() << "\n";
    std::cout << "wrote " << hist.string() << "\n";
  }
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& model_path) {
  const auto cfg = resolve(o);
  fs::create_directories(cfg.out_dir);
  for (const std::uint64_t seed : cfg.seeds) {
    const std::string src = model_path.empty()
                                ? default_model_path(cfg, "downstream_model", seed).string()
                                : model_path;
    const invarep::DownstreamModel model = invarep::load_downstream_model(src);
    const invarep::EvalReport e = invarep::evaluate_stage(cfg, model, seed);
    const json doc = {{"seed", seed},
                      {"train_loss", e.train.loss},
                      {"val_loss", e.val.loss},
                      {"val_accuracy", e.val.accuracy},
                      {"test_loss", e.test.loss},
                      {"test_accuracy", e.test.accuracy},
                      {"excess_risk", e.excess.estimate},
                      {"excess_se", e.excess.std_error}};
    const fs::path out = fs::path(cfg.out_dir) / ("eval" + seed_tag(seed) + ".json");
    write_file(out, doc.dump(2) + "\n");
    std::cout << doc.dump(2) << "\n";
  }
  return 0;
}

// Full protocol: ours plus the four reference methods on identical splits.
int cmd_baselines(const CommonOpts& o) {
  auto cfg = resolve(o);
  cfg.with_baselines = true;
  const invarep::ExperimentOutcome outcome = invarep::run_experiment(cfg);
  for (const invarep::MetricsRow& r : outcome.rows) {
    std::cout << r.run_id << ": test_loss " << invarep::format_double(r.test_loss)
              << ", excess " << invarep::format_double(r.excess_risk) << "\n";
  }
  for (const std::string& f : outcome.files) {
    std::cout << "wrote " << (fs::path(cfg.out_dir) / f).string() << "\n";
  }
  if (!outcome.ok) {
    std::cerr << "error [" << outcome.failed_stage << "]: " << outcome.message << "\n";
    return 1;
  }
  return 0;
}

int cmd_run(const CommonOpts& o) {
  const auto cfg = resolve(o);
  const invarep::ExperimentOutcome outcome = invarep::run_experiment(cfg);
  for (const invarep::MetricsRow& r : outcome.rows) {
    std::cout << r.run_id << ": test_loss " << invarep::format_double(r.test_loss)
              << ", excess " << invarep::format_double(r.excess_risk) << "\n";
  }
  for (const std::string& f : outcome.files) {
    std::cout << "wrote " << (fs::path(cfg.out_dir) / f).string() << "\n";
  }
  if (!outcome.ok) {
    std::cerr << "error [" << outcome.failed_stage << "]: " << outcome.message << "\n";
    return 1;
  }
  return 0;
}

int cmd_sweep(const CommonOpts& o) {
  const auto cfg = resolve(o);
  const std::vector<invarep::RegimeSweep> sweeps = invarep::sweep_m(cfg);
  for (const invarep::RegimeSweep& s : sweeps) {
    std::cout << invarep::to_string(s.regime) << ": slope "
              << invarep::format_double(s.fit.slope) << " (se "
              << invarep::format_double(s.fit.slope_se) << ")\n";
  }
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "sweep.csv").string() << "\n";
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "sweep_summary.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant-representation transfer learning experiments"};
  app.require_subcommand(1);

  CommonOpts gen_o, train_o, ft_o, eval_o, base_o, run_o, sweep_o;
  std::string upstream_path, model_path;

  add_common(app.add_subcommand("gen", "Write the per-seed train/fine-tune datasets as CSV."),
             gen_o);
  add_common(app.add_subcommand("train-up",
                                "Train the shared representation and sparse domain heads."),
             train_o);
  auto* ft = app.add_subcommand("finetune", "Fine-tune a task head on the frozen representation.");
  add_common(ft, ft_o);
  ft->add_option("--upstream-model", upstream_path,
                 "Upstream model file (default: <out>/upstream_model_seed<k>.json).");
  auto* ev = app.add_subcommand("eval", "Evaluate a fine-tuned model on fresh draws.");
  add_common(ev, eval_o);
  ev->add_option("--model", model_path,
                 "Fine-tuned model file (default: <out>/downstream_model_seed<k>.json).");
  add_common(app.add_subcommand("run", "Full protocol for one config (ours only by default)."),
             run_o);
  add_common(app.add_subcommand("baselines",
                                "Full protocol plus the four reference methods."),
             base_o);
  add_common(app.add_subcommand("sweep",
                                "Sample-size sweep over all transfer regimes with slope fits."),
             sweep_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("gen")) return cmd_gen(gen_o);
    if (app.got_subcommand("train-up")) return cmd_train_up(train_o);
    if (app.got_subcommand("finetune")) return cmd_finetune(ft_o, upstream_path);
    if (app.got_subcommand("eval")) return cmd_eval(eval_o, model_path);
    if (app.got_subcommand("run")) return cmd_run(run_o);
    if (app.got_subcommand("baselines")) return cmd_baselines(base_o);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep_o);
  } catch (const invarep::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
