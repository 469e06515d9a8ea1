#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "invarep/dataset_io.hpp"
#include "invarep/dcov.hpp"
#include "invarep/experiment.hpp"
#include "invarep/model_io.hpp"
#include "invarep/transport.hpp"

namespace invarep {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Declared supports are read off at a fixed magnitude threshold, matching the
// sparsity analyses this library is checked against.
constexpr double kSupportThreshold = 0.05;

// Stream labels: every random draw in a run comes from Rng(mix(seed, salt)),
// so any (config, seed) pair reproduces bit-identical outputs and the stages
// stay independent of each other's draw counts.
enum : std::uint64_t {
  kGenUp = 1,
  kGenDown = 2,
  kSplitUp = 3,
  kSplitDown = 4,
  kTrainUp = 5,
  kFinetune = 6,
  kTest = 7,
  kExcess = 8,
  kDiag = 9,
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                  std::uint64_t d = 0) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ull ^ b * 0xBF58476D1CE4E5B9ull ^
                    c * 0x94D049BB133111EBull ^ d * 0xD6E8FEB86659FD93ull;
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDull;
  x ^= x >> 33;
  return x;
}


void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

// Held-out representation diagnostics: dependence on the domain label and
// transport distance to the uniform reference, both on the same seeded draws
// for the before/after comparison to be meaningful.
struct RepDiag {
  double dcov = 0.0;
  double w1 = 0.0;
};

RepDiag rep_diag(const NormNet& rep, const MultiDomainDataset& holdout,
                 std::size_t domains, std::uint64_t seed) {
  RepDiag d;
  const Mat h = forward(rep, holdout.x);
  d.dcov = dcov_fast(h, domain_onehot(holdout.domain, domains));
  const std::size_t k = std::min<std::size_t>(64, h.rows());
  Mat block(k, h.cols());
  for (std::size_t i = 0; i < k; ++i) {
    std::copy(h.row(i), h.row(i) + h.cols(), block.row(i));
  }
  Rng rng(mix(seed, kDiag));
  d.w1 = w1_exact_matching(block, sample_uniform_ref(k, h.cols(), rng));
  return d;
}

bool upstream_support_exact(const Mat& f_hat, const Scenario& sc,
                            std::vector<std::size_t>& perm_out) {
  perm_out = best_support_alignment(f_hat, sc.heads, kSupportThreshold);
  return support_recovery(reorder_columns(f_hat, perm_out), support_masks(sc.heads),
                          kSupportThreshold)
      .exact;
}

// The task head lives in the learned representation basis, so it is read
// through the same column permutation that aligned the upstream heads.
bool head_support_exact(const Vec& head, const std::vector<std::size_t>& perm,
                        const Scenario& sc) {
  if (head.size() != sc.task_head.size()) return false;
  Mat h(1, head.size());
  for (std::size_t j = 0; j < head.size(); ++j) h(0, j) = head[perm[j]];
  Mat truth(1, sc.task_head.size());
  std::copy(sc.task_head.begin(), sc.task_head.end(), truth.row(0));
  return support_recovery(h, support_masks(truth), kSupportThreshold).exact;
}

struct EvalOut {
  Metrics train;
  Metrics val;
  Metrics test;
  ExcessRisk excess;
};

EvalOut eval_model(const DownstreamModel& model, const MultiDomainDataset& train,
                   const MultiDomainDataset& val, const Scenario& sc,
                   std::size_t test_draws, std::uint64_t seed) {
  EvalOut e;
  e.train = evaluate(model, train);
  e.val = evaluate(model, val);
  Rng test_rng(mix(seed, kTest));
  e.test = evaluate(model, gen_downstream(sc, test_draws, test_rng));
  Rng excess_rng(mix(seed, kExcess));
  e.excess = oracle_excess_risk(
      sc, [&](const Mat& x) { return predict_scores(model, x); }, test_draws,
      excess_rng);
  return e;
}

// Small downstream samples cannot fill the configured batch; the fine-tune
// batch shrinks to the training split (not below the 8-row minimum the
// trainers enforce).
FinetuneConfig adapt_batch(FinetuneConfig cfg, std::size_t train_rows) {
  cfg.batch_size = std::min(cfg.batch_size, std::max<std::size_t>(train_rows, 8));
  return cfg;
}

MetricsRow base_row(const ExperimentConfig& cfg, const std::string& method,
                    std::uint64_t seed, std::size_t m) {
  MetricsRow row;
  row.run_id = method + "_seed" + std::to_string(seed);
  row.method = method;
  row.task = cfg.scenario.task;
  row.regime = cfg.scenario.regime;
  row.n = cfg.n_upstream;
  row.m = m;
  row.seed = seed;
  return row;
}

void fill_eval(MetricsRow& row, const EvalOut& e) {
  row.train_loss = e.train.loss;
  row.val_loss = e.val.loss;
  row.val_accuracy = e.val.accuracy;
  row.test_loss = e.test.loss;
  row.test_accuracy = e.test.accuracy;
  row.excess_risk = e.excess.estimate;
  row.excess_se = e.excess.std_error;
}

json row_json(const MetricsRow& r) {
  return json{{"run", r.run_id},
              {"method", r.method},
              {"seed", r.seed},
              {"m", r.m},
              {"val_loss", r.val_loss},
              {"test_loss", r.test_loss},
              {"excess_risk", r.excess_risk},
              {"excess_se", r.excess_se},
              {"upstream_support_exact", r.upstream_support_exact},
              {"head_support_exact", r.head_support_exact}};
}

}  // namespace

std::string upstream_history_csv(const std::vector<RiskBreakdown>& hist) {
  std::string s = "epoch,fit,dependence,pinning,head_l1,total\n";
  for (std::size_t e = 0; e < hist.size(); ++e) {
    s += std::to_string(e + 1) + ',' + format_double(hist[e].fit) + ',' +
         format_double(hist[e].dependence) + ',' + format_double(hist[e].pinning) +
         ',' + format_double(hist[e].head_l1) + ',' + format_double(hist[e].total) +
         '\n';
  }
  return s;
}

std::string finetune_history_csv(const std::vector<FinetuneBreakdown>& hist) {
  std::string s = "epoch,fit,dependence,head_l1,reduction_fro,total\n";
  for (std::size_t e = 0; e < hist.size(); ++e) {
    s += std::to_string(e + 1) + ',' + format_double(hist[e].fit) + ',' +
         format_double(hist[e].dependence) + ',' + format_double(hist[e].head_l1) +
         ',' + format_double(hist[e].reduction_fro) + ',' +
         format_double(hist[e].total) + '\n';
  }
  return s;
}

MultiDomainDataset experiment_upstream_data(const ExperimentConfig& cfg,
                                            std::uint64_t seed) {
  if (!cfg.upstream_csv.empty()) return load_dataset(cfg.upstream_csv);
  Rng rng(mix(seed, kGenUp));
  return gen_upstream(cfg.scenario, cfg.n_upstream, rng);
}

MultiDomainDataset experiment_downstream_data(const ExperimentConfig& cfg,
                                              std::uint64_t seed) {
  if (!cfg.downstream_csv.empty()) return load_dataset(cfg.downstream_csv);
  Rng rng(mix(seed, kGenDown));
  return gen_downstream(cfg.scenario, cfg.m_downstream, rng);
}

UpstreamResult run_upstream_stage(const ExperimentConfig& cfg, std::uint64_t seed) {
  const MultiDomainDataset all = experiment_upstream_data(cfg, seed);
  Rng split_rng(mix(seed, kSplitUp));
  const auto [train, val] = split_frac(all, 0.8, split_rng);
  Rng rng(mix(seed, kTrainUp));
  return train_upstream(train, cfg.upstream, rng);
}

FinetuneResult run_finetune_stage(const ExperimentConfig& cfg,
                                  const UpstreamModel& upstream,
                                  std::uint64_t seed) {
  const MultiDomainDataset all = experiment_downstream_data(cfg, seed);
  Rng split_rng(mix(seed, kSplitDown));
  const auto [train, val] = split_frac(all, 0.8, split_rng);
  const FinetuneConfig ft = adapt_batch(cfg.finetune, train.size());
  Rng rng(mix(seed, kFinetune));
  if (cfg.select_reduced_dim && ft.aux_enabled) {
    return std::move(
        select_dstar(upstream, train, val, ft, cfg.scenario.task, rng).best_result);
  }
  return finetune(upstream, train, ft, cfg.scenario.task, rng);
}

EvalReport evaluate_stage(const ExperimentConfig& cfg, const DownstreamModel& model,
                          std::uint64_t seed) {
  const MultiDomainDataset all = experiment_downstream_data(cfg, seed);
  Rng split_rng(mix(seed, kSplitDown));
  const auto [train, val] = split_frac(all, 0.8, split_rng);
  const EvalOut e = eval_model(model, train, val, cfg.scenario, cfg.test_draws, seed);
  return EvalReport{e.train, e.val, e.test, e.excess};
}

std::vector<BaselineResult> run_baselines(const UpstreamModel& ours,
                                          const UpstreamModel& erm_upstream,
                                          const MultiDomainDataset& train,
                                          const MultiDomainDataset& val,
                                          const ExperimentConfig& cfg,
                                          std::uint64_t seed) {
  const Task task = cfg.scenario.task;
  const FinetuneConfig ft = adapt_batch(cfg.finetune, train.size());
  std::vector<BaselineResult> out;

  const auto run_one = [&](const std::string& method, const UpstreamModel& up,
                           FinetuneConfig c) {
    Rng rng(mix(seed, kFinetune));
    BaselineResult r;
    r.method = method;
    r.model = finetune(up, train, c, task, rng).model;
    const EvalOut e =
        eval_model(r.model, train, val, cfg.scenario, cfg.test_draws, seed);
    r.train = e.train;
    r.val = e.val;
    r.test = e.test;
    r.excess = e.excess;
    out.push_back(std::move(r));
  };

  // Plain-ERM upstream, standard fine-tune.
  run_one("erm-ud", erm_upstream, ft);
  // Linear head only on the invariant representation.
  {
    FinetuneConfig c = ft;
    c.aux_enabled = false;
    run_one("tir", ours, c);
  }
  // Auxiliary branch only: no transfer from the representation.
  {
    FinetuneConfig c = ft;
    c.train_head = false;
    c.independence_weight = 0.0;
    run_one("erm-d", ours, c);
  }
  // Full method without the independence penalty.
  {
    FinetuneConfig c = ft;
    c.independence_weight = 0.0;
    run_one("wi", ours, c);
  }
  return out;
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentOutcome out;
  std::string stage = "setup";
  json results = json::array();

  try {
    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "config.json", config_to_json_text(cfg));
    out.files.push_back("config.json");

    for (const std::uint64_t seed : cfg.seeds) {
      const std::string tag = "_seed" + std::to_string(seed);

      stage = "gen";
      const MultiDomainDataset up_all = experiment_upstream_data(cfg, seed);
      const MultiDomainDataset down_all = experiment_downstream_data(cfg, seed);
      Rng up_split_rng(mix(seed, kSplitUp));
      const auto [up_train, up_val] = split_frac(up_all, 0.8, up_split_rng);
      Rng down_split_rng(mix(seed, kSplitDown));
      const auto [down_train, down_val] = split_frac(down_all, 0.8, down_split_rng);

      stage = "train-up";
      const std::size_t domains = count_domains(up_train);
      RepDiag diag_init;
      {
        // Same stream the stage helper draws its init from, so the recorded
        // initial diagnostics describe the actual starting point.
        Rng probe(mix(seed, kTrainUp));
        const UpstreamModel init =
            init_upstream_model(up_train.dim(), domains, cfg.upstream, probe);
        diag_init = rep_diag(init.rep, up_val, domains, seed);
      }
      UpstreamResult up = run_upstream_stage(cfg, seed);
      const RepDiag diag_final = rep_diag(up.model.rep, up_val, domains, seed);
      std::vector<std::size_t> perm;
      const bool up_exact = upstream_support_exact(up.model.heads, cfg.scenario, perm);

      save_upstream_model(up.model,
                          (fs::path(cfg.out_dir) / ("upstream_model" + tag + ".json"))
                              .string());
      out.files.push_back("upstream_model" + tag + ".json");
      write_text(fs::path(cfg.out_dir) / ("upstream_history" + tag + ".csv"),
                 upstream_history_csv(up.history));
      out.files.push_back("upstream_history" + tag + ".csv");

      stage = "finetune";
      const FinetuneConfig ft = adapt_batch(cfg.finetune, down_train.size());
      FinetuneResult ours = run_finetune_stage(cfg, up.model, seed);
      const std::size_t chosen_dim =
          ours.model.aux_enabled ? ours.model.reduction.rows() : 0;
      save_downstream_model(
          ours.model,
          (fs::path(cfg.out_dir) / ("downstream_model" + tag + ".json")).string());
      out.files.push_back("downstream_model" + tag + ".json");
      write_text(fs::path(cfg.out_dir) / ("finetune_history" + tag + ".csv"),
                 finetune_history_csv(ours.history));
      out.files.push_back("finetune_history" + tag + ".csv");

      stage = "eval";
      MetricsRow row = base_row(cfg, "ours", seed, cfg.m_downstream);
      row.reduced_dim = chosen_dim;
      fill_eval(row, eval_model(ours.model, down_train, down_val, cfg.scenario,
                                cfg.test_draws, seed));
      row.upstream_support_exact = up_exact;
      row.head_support_exact = head_support_exact(ours.model.task_head, perm,
                                                  cfg.scenario);
      row.dcov_init = diag_init.dcov;
      row.dcov_final = diag_final.dcov;
      row.w1_init = diag_init.w1;
      row.w1_final = diag_final.w1;
      out.rows.push_back(row);
      results.push_back(row_json(row));

      if (cfg.with_baselines) {
        stage = "baselines";
        UpstreamConfig plain = cfg.upstream;
        plain.invariance_weight = 0.0;
        plain.pinning_weight = 0.0;
        Rng erm_rng(mix(seed, kTrainUp));  // same stream: identical init
        UpstreamResult erm = train_upstream(up_train, plain, erm_rng);
        const RepDiag erm_diag =
            rep_diag(erm.model.rep, up_val, count_domains(up_train), seed);
        std::vector<std::size_t> erm_perm;
        const bool erm_exact =
            upstream_support_exact(erm.model.heads, cfg.scenario, erm_perm);

        for (BaselineResult& b : run_baselines(up.model, erm.model, down_train,
                                               down_val, cfg, seed)) {
          MetricsRow brow = base_row(cfg, b.method, seed, cfg.m_downstream);
          brow.reduced_dim = b.model.aux_enabled ? ft.reduced_dim : 0;
          brow.train_loss = b.train.loss;
          brow.val_loss = b.val.loss;
          brow.val_accuracy = b.val.accuracy;
          brow.test_loss = b.test.loss;
          brow.test_accuracy = b.test.accuracy;
          brow.excess_risk = b.excess.estimate;
          brow.excess_se = b.excess.std_error;
          const bool own_upstream = b.method == "erm-ud";
          brow.upstream_support_exact = own_upstream ? erm_exact : up_exact;
          brow.head_support_exact = head_support_exact(
              b.model.task_head, own_upstream ? erm_perm : perm, cfg.scenario);
          const RepDiag& dg = own_upstream ? erm_diag : diag_final;
          brow.dcov_init = diag_init.dcov;
          brow.dcov_final = dg.dcov;
          brow.w1_init = diag_init.w1;
          brow.w1_final = dg.w1;
          out.rows.push_back(brow);
          results.push_back(row_json(brow));
        }
      }
    }

  } catch (const Error& e) {
    out.ok = false;
    out.failed_stage = stage;
    out.message = e.what();
  }

  // The summary is written even after a failure so partial outputs are
  // flagged rather than silently half-present.
  try {
    std::string csv = metrics_csv_header() + "\n";
    for (const MetricsRow& r : out.rows) csv += metrics_csv_line(r) + "\n";
    write_text(fs::path(cfg.out_dir) / "metrics.csv", csv);
    out.files.push_back("metrics.csv");

    const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    json summary;
    summary["status"] = out.ok ? "ok" : "failed";
    summary["failed_stage"] = out.failed_stage;
    summary["message"] = out.message;
    summary["partial"] = !out.ok;
    summary["task"] = cfg.scenario.task == Task::regression ? "regression"
                                                            : "classification";
    summary["regime"] = to_string(cfg.scenario.regime);
    summary["n_upstream"] = cfg.n_upstream;
    summary["m_downstream"] = cfg.m_downstream;
    summary["seeds"] = cfg.seeds;
    summary["results"] = results;
    summary["files"] = out.files;
    summary["timing"] = json{{"wall_ms", wall}};  // informational, not reproducible
    write_text(fs::path(cfg.out_dir) / "summary.json", summary.dump(2) + "\n");
    out.files.push_back("summary.json");
  } catch (const Error& e) {
    if (out.ok) {
      out.ok = false;
      out.failed_stage = "write";
      out.message = e.what();
    }
  }
  return out;
}

std::vector<RegimeSweep> sweep_m(const ExperimentConfig& cfg) {
  if (cfg.sweep_m.size() < 4) {
    throw ConfigError("sweep: needs at least 4 m values");
  }
  std::vector<std::size_t> grid = cfg.sweep_m;
  std::sort(grid.begin(), grid.end());
  if (grid.front() == 0 ||
      static_cast<double>(grid.back()) / static_cast<double>(grid.front()) <
          31.622776601683793) {
    throw ConfigError("sweep: m values must span at least 1.5 decades");
  }
  if (cfg.seeds.size() < 5) throw ConfigError("sweep: needs at least 5 seeds");
  if (cfg.scenario.regime != Regime::partial) {
    throw ConfigError(
        "sweep: the base scenario must be partial transfer so the complete "
        "and none variants can be derived from it");
  }

  // Regime variants share every truth parameter except the part each regime
  // switches off.
  Scenario complete = cfg.scenario;
  complete.regime = Regime::complete;
  complete.aux_mix = Mat(cfg.scenario.aux_mix.rows(), cfg.scenario.aux_mix.cols());
  complete.validate();
  Scenario none = cfg.scenario;
  none.regime = Regime::none;
  none.task_head.assign(cfg.scenario.task_head.size(), 0.0);
  none.validate();
  const Scenario* scenarios[3] = {&complete, &cfg.scenario, &none};

  std::vector<RegimeSweep> out(3);
  std::string csv = "regime,m,seed,excess_risk,excess_se,val_loss\n";

  std::vector<std::vector<std::vector<double>>> excess(
      3, std::vector<std::vector<double>>(grid.size()));

  for (const std::uint64_t seed : cfg.seeds) {
    Rng gen_rng(mix(seed, kGenUp));
    const MultiDomainDataset up_all =
        gen_upstream(cfg.scenario, cfg.n_upstream, gen_rng);
    Rng split_rng(mix(seed, kSplitUp));
    const auto [up_train, up_val] = split_frac(up_all, 0.8, split_rng);
    Rng up_rng(mix(seed, kTrainUp));
    const UpstreamResult up = train_upstream(up_train, cfg.upstream, up_rng);

    for (std::size_t g = 0; g < 3; ++g) {
      const Scenario& sc = *scenarios[g];
      for (std::size_t mi = 0; mi < grid.size(); ++mi) {
        const std::size_t m = grid[mi];
        Rng down_rng(mix(seed, kGenDown, g, m));
        const MultiDomainDataset down = gen_downstream(sc, m, down_rng);
        Rng dsplit_rng(mix(seed, kSplitDown, g, m));
        const auto [train, val] = split_frac(down, 0.8, dsplit_rng);

        Rng ft_rng(mix(seed, kFinetune, g, m));
        const FinetuneConfig ft = adapt_batch(cfg.finetune, train.size());
        const FinetuneResult res = finetune(up.model, train, ft, sc.task, ft_rng);

        Rng ex_rng(mix(seed, kExcess, g, m));
        const ExcessRisk ex = oracle_excess_risk(
            sc, [&](const Mat& x) { return predict_scores(res.model, x); },
            cfg.test_draws, ex_rng);
        const Metrics val_metrics = evaluate(res.model, val);

        excess[g][mi].push_back(ex.estimate);
        csv += to_string(sc.regime) + ',' + std::to_string(m) + ',' +
               std::to_string(seed) + ',' + format_double(ex.estimate) + ',' +
               format_double(ex.std_error) + ',' +
               format_double(val_metrics.loss) + '\n';
      }
    }
  }

  std::vector<double> m_as_double(grid.begin(), grid.end());
  json summary_regimes = json::array();
  for (std::size_t g = 0; g < 3; ++g) {
    RegimeSweep& rs = out[g];
    rs.regime = scenarios[g]->regime;
    rs.m = grid;
    for (std::size_t mi = 0; mi < grid.size(); ++mi) {
      double sum = 0.0;
      for (double v : excess[g][mi]) sum += v;
      // Monte Carlo noise can push a near-zero mean excess slightly negative;
      // the floor keeps the log-log fit defined without affecting any real
      // curve (observed excesses sit orders of magnitude above it).
      rs.mean_excess.push_back(
          std::max(sum / static_cast<double>(excess[g][mi].size()), 1e-12));
    }
    rs.fit = fit_loglog(m_as_double, rs.mean_excess);
    summary_regimes.push_back(json{{"regime", to_string(rs.regime)},
                                   {"m", rs.m},
                                   {"mean_excess", rs.mean_excess},
                                   {"slope", rs.fit.slope},
                                   {"slope_se", rs.fit.slope_se},
                                   {"intercept", rs.fit.intercept}});
  }

  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "sweep.csv", csv);
  json summary;
  summary["regimes"] = summary_regimes;
  summary["seeds"] = cfg.seeds;
  summary["test_draws"] = cfg.test_draws;
  write_text(fs::path(cfg.out_dir) / "sweep_summary.json", summary.dump(2) + "\n");
  return out;
}

}  // namespace invarep
