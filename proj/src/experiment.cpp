#include "invarep/experiment.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace invarep {
namespace {

using nlohmann::json;

// ---- enum parsing (names live with the enums in scenario.cpp) ----

Task task_from(const std::string& s, const std::string& key) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  throw ConfigError("config: " + key + " has unknown value '" + s + "'");
}

Regime regime_from(const std::string& s, const std::string& key) {
  if (s == "complete") return Regime::complete;
  if (s == "partial") return Regime::partial;
  if (s == "none") return Regime::none;
  throw ConfigError("config: " + key + " has unknown value '" + s + "'");
}

WarpKind warp_from(const std::string& s, const std::string& key) {
  if (s == "identity") return WarpKind::identity;
  if (s == "smoothstep") return WarpKind::smoothstep;
  if (s == "square") return WarpKind::square;
  throw ConfigError("config: " + key + " has unknown value '" + s + "'");
}

// ---- strict object reader ----

// Wraps one JSON object: typed getters mark keys as consumed and finish()
// rejects whatever was not consumed, so typos cannot silently fall back to
// defaults.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : obj_(j), path_(std::move(path)) {
    if (!obj_.is_object()) {
      throw ConfigError("config: " + path_ + " must be an object");
    }
  }

  const json* find(const std::string& key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) {
        fail(key, "a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }

  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }

  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of non-negative integers");
      std::vector<std::size_t> tmp;
      for (const json& e : *v) {
        if (!e.is_number_integer() || e.get<long long>() < 0) {
          fail(key, "an array of non-negative integers");
        }
        tmp.push_back(e.get<std::size_t>());
      }
      out = std::move(tmp);
    }
  }

  void get(const std::string& key, Vec& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of numbers");
      Vec tmp;
      for (const json& e : *v) {
        if (!e.is_number()) fail(key, "an array of numbers");
        tmp.push_back(e.get<double>());
      }
      out = std::move(tmp);
    }
  }

  void get(const std::string& key, Mat& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of equal-length number rows");
      std::vector<Vec> rows;
      for (const json& r : *v) {
        if (!r.is_array()) fail(key, "an array of equal-length number rows");
        Vec row;
        for (const json& e : r) {
          if (!e.is_number()) fail(key, "an array of equal-length number rows");
          row.push_back(e.get<double>());
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
          fail(key, "an array of equal-length number rows");
        }
        rows.push_back(std::move(row));
      }
      Mat m(rows.size(), rows.empty() ? 0 : rows.front().size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(rows[i].begin(), rows[i].end(), m.row(i));
      }
      out = std::move(m);
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.contains(it.key())) {
        throw ConfigError("config: unknown key '" + path_ + "." + it.key() + "'");
      }
    }
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& want) const {
    throw ConfigError("config: " + path_ + "." + key + " must be " + want);
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_scenario(const json& j, Scenario& sc) {
  ObjectReader r(j, "scenario");
  // Task and regime rebuild the default truth so that e.g. switching the
  // regime alone still yields a consistent scenario; explicit keys below
  // then override the rebuilt base.
  std::string task = to_string(sc.task), regime = to_string(sc.regime);
  r.get("task", task);
  r.get("regime", regime);
  sc = default_scenario(task_from(task, "scenario.task"),
                        regime_from(regime, "scenario.regime"));
  r.get("input_dim", sc.input_dim);
  r.get("rep_dim", sc.rep_dim);
  r.get("domains", sc.domains);
  r.get("aux_dim", sc.aux_dim);
  r.get("selected", sc.selected);
  if (const json* v = r.find("warps")) {
    if (!v->is_array()) throw ConfigError("config: scenario.warps must be an array of strings");
    std::vector<WarpKind> warps;
    for (const json& e : *v) {
      if (!e.is_string()) {
        throw ConfigError("config: scenario.warps must be an array of strings");
      }
      warps.push_back(warp_from(e.get<std::string>(), "scenario.warps"));
    }
    sc.warps = std::move(warps);
  }
  r.get("heads", sc.heads);
  r.get("task_head", sc.task_head);
  r.get("aux_mix", sc.aux_mix);
  r.get("noise_scale", sc.noise_scale);
  r.get("domain_probs", sc.domain_probs);
  r.finish();
  sc.validate();
}

void read_critic(const json& j, CriticConfig& c) {
  ObjectReader r(j, "upstream.critic");
  r.get("width", c.width);
  r.get("depth", c.depth);
  r.get("norm_budget", c.norm_budget);
  r.get("ascent_steps", c.ascent_steps);
  r.get("learning_rate", c.learning_rate);
  r.finish();
}

void read_upstream(const json& j, UpstreamConfig& u) {
  ObjectReader r(j, "upstream");
  r.get("rep_dim", u.rep_dim);
  r.get("rep_hidden", u.rep_hidden);
  r.get("rep_budget", u.rep_budget);
  r.get("invariance_weight", u.invariance_weight);
  r.get("pinning_weight", u.pinning_weight);
  r.get("head_l1_weight", u.head_l1_weight);
  r.get("head_radius", u.head_radius);
  r.get("epochs", u.epochs);
  r.get("batch_size", u.batch_size);
  r.get("rep_lr", u.rep_lr);
  r.get("head_lr", u.head_lr);
  r.get("cosine_lr", u.cosine_lr);
  if (const json* v = r.find("critic")) read_critic(*v, u.critic);
  r.get("early_stop", u.early_stop);
  r.get("early_stop_tol", u.early_stop_tol);
  r.get("early_stop_window", u.early_stop_window);
  r.get("record_full_risk", u.record_full_risk);
  r.finish();
}

void read_finetune(const json& j, FinetuneConfig& f) {
  ObjectReader r(j, "finetune");
  r.get("reduced_dim", f.reduced_dim);
  r.get("reduced_dim_candidates", f.reduced_dim_candidates);
  r.get("aux_hidden", f.aux_hidden);
  r.get("aux_budget", f.aux_budget);
  r.get("independence_weight", f.independence_weight);
  if (const json* v = r.find("head_l1_weight")) {
    if (v->is_null()) {
      f.head_l1_weight.reset();  // back to the 1/sqrt(m) default
    } else if (v->is_number()) {
      f.head_l1_weight = v->get<double>();
    } else {
      throw ConfigError("config: finetune.head_l1_weight must be a number or null");
    }
  }
  r.get("reduction_fro_weight", f.reduction_fro_weight);
  r.get("head_radius", f.head_radius);
  r.get("reduction_radius", f.reduction_radius);
  r.get("epochs", f.epochs);
  r.get("batch_size", f.batch_size);
  r.get("head_lr", f.head_lr);
  r.get("reduction_lr", f.reduction_lr);
  r.get("aux_lr", f.aux_lr);
  r.get("cosine_lr", f.cosine_lr);
  r.get("train_head", f.train_head);
  r.get("aux_enabled", f.aux_enabled);
  r.finish();
}

json mat_json(const Mat& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json scenario_json(const Scenario& sc) {
  json warps = json::array();
  for (WarpKind w : sc.warps) warps.push_back(to_string(w));
  return json{{"task", to_string(sc.task)},
              {"regime", to_string(sc.regime)},
              {"input_dim", sc.input_dim},
              {"rep_dim", sc.rep_dim},
              {"domains", sc.domains},
              {"aux_dim", sc.aux_dim},
              {"selected", sc.selected},
              {"warps", warps},
              {"heads", mat_json(sc.heads)},
              {"task_head", sc.task_head},
              {"aux_mix", mat_json(sc.aux_mix)},
              {"noise_scale", sc.noise_scale},
              {"domain_probs", sc.domain_probs}};
}

json upstream_json(const UpstreamConfig& u) {
  return json{{"rep_dim", u.rep_dim},
              {"rep_hidden", u.rep_hidden},
              {"rep_budget", u.rep_budget},
              {"invariance_weight", u.invariance_weight},
              {"pinning_weight", u.pinning_weight},
              {"head_l1_weight", u.head_l1_weight},
              {"head_radius", u.head_radius},
              {"epochs", u.epochs},
              {"batch_size", u.batch_size},
              {"rep_lr", u.rep_lr},
              {"head_lr", u.head_lr},
              {"cosine_lr", u.cosine_lr},
              {"critic",
               {{"width", u.critic.width},
                {"depth", u.critic.depth},
                {"norm_budget", u.critic.norm_budget},
                {"ascent_steps", u.critic.ascent_steps},
                {"learning_rate", u.critic.learning_rate}}},
              {"early_stop", u.early_stop},
              {"early_stop_tol", u.early_stop_tol},
              {"early_stop_window", u.early_stop_window},
              {"record_full_risk", u.record_full_risk}};
}

json finetune_json(const FinetuneConfig& f) {
  json head_l1 = nullptr;
  if (f.head_l1_weight.has_value()) head_l1 = *f.head_l1_weight;
  return json{{"reduced_dim", f.reduced_dim},
              {"reduced_dim_candidates", f.reduced_dim_candidates},
              {"aux_hidden", f.aux_hidden},
              {"aux_budget", f.aux_budget},
              {"independence_weight", f.independence_weight},
              {"head_l1_weight", head_l1},
              {"reduction_fro_weight", f.reduction_fro_weight},
              {"head_radius", f.head_radius},
              {"reduction_radius", f.reduction_radius},
              {"epochs", f.epochs},
              {"batch_size", f.batch_size},
              {"head_lr", f.head_lr},
              {"reduction_lr", f.reduction_lr},
              {"aux_lr", f.aux_lr},
              {"cosine_lr", f.cosine_lr},
              {"train_head", f.train_head},
              {"aux_enabled", f.aux_enabled}};
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid json: ") + e.what());
  }
  ExperimentConfig cfg;
  ObjectReader r(j, "config");
  if (const json* v = r.find("scenario")) read_scenario(*v, cfg.scenario);
  if (const json* v = r.find("upstream")) read_upstream(*v, cfg.upstream);
  if (const json* v = r.find("finetune")) read_finetune(*v, cfg.finetune);
  r.get("n_upstream", cfg.n_upstream);
  r.get("m_downstream", cfg.m_downstream);
  r.get("test_draws", cfg.test_draws);
  r.get("with_baselines", cfg.with_baselines);
  r.get("select_reduced_dim", cfg.select_reduced_dim);
  r.get("sweep_m", cfg.sweep_m);
  r.get("seeds", cfg.seeds);
  r.get("out_dir", cfg.out_dir);
  r.get("upstream_csv", cfg.upstream_csv);
  r.get("downstream_csv", cfg.downstream_csv);
  r.finish();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  const json j{{"scenario", scenario_json(cfg.scenario)},
               {"upstream", upstream_json(cfg.upstream)},
               {"finetune", finetune_json(cfg.finetune)},
               {"n_upstream", cfg.n_upstream},
               {"m_downstream", cfg.m_downstream},
               {"test_draws", cfg.test_draws},
               {"with_baselines", cfg.with_baselines},
               {"select_reduced_dim", cfg.select_reduced_dim},
               {"sweep_m", cfg.sweep_m},
               {"seeds", cfg.seeds},
               {"out_dir", cfg.out_dir},
               {"upstream_csv", cfg.upstream_csv},
               {"downstream_csv", cfg.downstream_csv}};
  return j.dump(2) + "\n";
}

std::string metrics_csv_header() {
  return "run,method,task,regime,n,m,seed,reduced_dim,train_loss,val_loss,"
         "val_accuracy,test_loss,test_accuracy,excess_risk,excess_se,"
         "upstream_support_exact,head_support_exact,dcov_init,dcov_final,"
         "w1_init,w1_final";
}

std::string metrics_csv_line(const MetricsRow& r) {
  std::ostringstream s;
  s << r.run_id << ',' << r.method << ',' << to_string(r.task) << ','
    << to_string(r.regime) << ',' << r.n << ',' << r.m << ',' << r.seed << ','
    << r.reduced_dim << ',' << format_double(r.train_loss) << ','
    << format_double(r.val_loss) << ',' << format_double(r.val_accuracy) << ','
    << format_double(r.test_loss) << ',' << format_double(r.test_accuracy) << ','
    << format_double(r.excess_risk) << ',' << format_double(r.excess_se) << ','
    << (r.upstream_support_exact ? 1 : 0) << ',' << (r.head_support_exact ? 1 : 0)
    << ',' << format_double(r.dcov_init) << ',' << format_double(r.dcov_final)
    << ',' << format_double(r.w1_init) << ',' << format_double(r.w1_final);
  return s.str();
}

SlopeFit fit_loglog(const std::vector<double>& m, const std::vector<double>& y) {
  if (m.size() != y.size()) throw ShapeError("fit_loglog: size mismatch");
  if (m.size() < 3) {
    throw InsufficientSamplesError("fit_loglog: needs at least 3 points");
  }
  const std::size_t k = m.size();
  std::vector<double> lx(k), ly(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (m[i] <= 0.0 || y[i] <= 0.0) {
      throw NumericError("fit_loglog: values must be positive");
    }
    lx[i] = std::log(m[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw NumericError("fit_loglog: degenerate abscissa");
  SlopeFit fit;
  fit.points = k;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
    sse += e * e;
  }
  fit.slope_se = std::sqrt(sse / (static_cast<double>(k) - 2.0) / sxx);
  return fit;
}

}  // namespace invarep
