#include "invarep/scenario.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <string>

namespace invarep {
namespace {

double apply_warp(WarpKind w, double u) {
  switch (w) {
    case WarpKind::identity: return u;
    case WarpKind::smoothstep: return u * u * (3.0 - 2.0 * u);
    case WarpKind::square: return u * u;
  }
  throw ConfigError("unknown warp kind");
}

double draw_noise(const Scenario& sc, Rng& rng) {
  return rng.uniform(-sc.noise_scale, sc.noise_scale);
}

int draw_domain(const Scenario& sc, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t s = 0; s < sc.domains; ++s) {
    acc += sc.domain_probs[s];
    if (u < acc) return static_cast<int>(s) + 1;
  }
  return static_cast<int>(sc.domains);
}

}  // namespace

std::string to_string(Task t) {
  return t == Task::regression ? "regression" : "classification";
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::complete: return "complete";
    case Regime::partial: return "partial";
    case Regime::none: return "none";
  }
  throw ConfigError("unknown regime value");
}

std::string to_string(WarpKind w) {
  switch (w) {
    case WarpKind::identity: return "identity";
    case WarpKind::smoothstep: return "smoothstep";
    case WarpKind::square: return "square";
  }
  throw ConfigError("unknown warp value");
}

void Scenario::validate() const {
  if (input_dim == 0 || rep_dim == 0 || domains == 0) {
    throw ConfigError("scenario: dimensions must be positive");
  }
  if (selected.size() != rep_dim || warps.size() != rep_dim) {
    throw ConfigError("scenario: selector/warp lists must have rep_dim entries");
  }
  std::set<std::size_t> seen;
  for (std::size_t c : selected) {
    if (c >= input_dim) throw ConfigError("scenario: selected coordinate out of range");
    if (!seen.insert(c).second) throw ConfigError("scenario: repeated selected coordinate");
  }
  if (heads.rows() != domains || heads.cols() != rep_dim) {
    throw ConfigError("scenario: heads must be domains x rep_dim");
  }
  if (task_head.size() != rep_dim) throw ConfigError("scenario: task head must have rep_dim entries");
  if (aux_mix.rows() != aux_dim || aux_mix.cols() != input_dim) {
    throw ConfigError("scenario: aux_mix must be aux_dim x input_dim");
  }
  // The reduction must not read any selected coordinate, so the auxiliary
  // signal is independent of the transferred representation.
  for (std::size_t k = 0; k < aux_mix.rows(); ++k) {
    for (std::size_t c : selected) {
      if (aux_mix(k, c) != 0.0) {
        throw ConfigError("scenario: aux_mix row " + std::to_string(k) +
                          " reads selected coordinate " + std::to_string(c));
      }
    }
  }
  if (!(noise_scale >= 0.0 && noise_scale <= 1.0)) {
    throw ConfigError("scenario: noise_scale must lie in [0,1]");
  }
  if (domain_probs.size() != domains) throw ConfigError("scenario: domain_probs size mismatch");
  double sum = 0.0;
  for (double p : domain_probs) {
    if (p < 0.0) throw ConfigError("scenario: negative domain probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-12) throw ConfigError("scenario: domain_probs must sum to 1");
  if (regime == Regime::none) {
    for (double v : task_head) {
      if (v != 0.0) throw ConfigError("scenario: no-transfer regime requires a zero task head");
    }
  }
}

Scenario default_scenario(Task task, Regime regime) {
  Scenario sc;
  sc.input_dim = 8;
  sc.rep_dim = 3;
  sc.domains = 3;
  sc.aux_dim = 2;
  sc.selected = {0, 1, 2};
  sc.warps.assign(3, WarpKind::identity);
  // Two active entries per domain with overlapping, pairwise distinct
  // supports, magnitudes well above the recovery threshold.
  sc.heads = Mat::from_rows({{1.0, -0.8, 0.0},
                             {0.0, 0.9, 1.1},
                             {-0.7, 0.0, 1.2}});
  sc.task_head = {1.0, 0.0, -0.6};
  sc.aux_mix = Mat(2, 8);
  sc.aux_mix(0, 3) = 1.0;
  sc.aux_mix(1, 4) = 0.5;
  sc.aux_mix(1, 5) = 0.5;
  sc.task = task;
  sc.regime = regime;
  if (regime == Regime::none) sc.task_head.assign(3, 0.0);
  if (regime == Regime::complete) sc.aux_mix = Mat(2, 8);  // q* input still defined; q* forced 0
  sc.domain_probs.assign(3, 1.0 / 3.0);
  sc.validate();
  return sc;
}

Mat true_rep(const Scenario& sc, const Mat& x) {
  if (x.cols() != sc.input_dim) throw ShapeError("true_rep: input dim mismatch");
  Mat h(x.rows(), sc.rep_dim);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < sc.rep_dim; ++j) {
      h(i, j) = apply_warp(sc.warps[j], x(i, sc.selected[j]));
    }
  }
  return h;
}

Vec aux_nonlinearity(const Mat& u) {
  Vec out(u.rows(), 0.0);
  for (std::size_t i = 0; i < u.rows(); ++i) {
    double v = 0.0;
    if (u.cols() >= 1) v += std::sin(2.0 * std::numbers::pi * u(i, 0));
    if (u.cols() >= 2) v += 0.5 * u(i, 1) * u(i, 1);
    out[i] = v;
  }
  return out;
}

Vec true_aux(const Scenario& sc, const Mat& x) {
  if (sc.regime == Regime::complete) return Vec(x.rows(), 0.0);
  Mat u(x.rows(), sc.aux_dim);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < sc.aux_dim; ++k) {
      u(i, k) = dot(sc.aux_mix.row(k), x.row(i), sc.input_dim);
    }
  }
  return aux_nonlinearity(u);
}

Vec true_score(const Scenario& sc, const Mat& x) {
  const Mat h = true_rep(sc, x);
  Vec q = true_aux(sc, x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    q[i] += dot(sc.task_head.data(), h.row(i), sc.rep_dim);
  }
  return q;
}

MultiDomainDataset gen_upstream(const Scenario& sc, std::size_t n, Rng& rng) {
  sc.validate();
  MultiDomainDataset d;
  d.x = Mat(n, sc.input_dim);
  d.y.resize(n);
  d.domain.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.domain[i] = draw_domain(sc, rng);
    for (std::size_t j = 0; j < sc.input_dim; ++j) d.x(i, j) = rng.uniform();
    const double eps = draw_noise(sc, rng);
    Vec hv(sc.rep_dim);
    for (std::size_t j = 0; j < sc.rep_dim; ++j) {
      hv[j] = apply_warp(sc.warps[j], d.x(i, sc.selected[j]));
    }
    d.y[i] = dot(sc.heads.row(static_cast<std::size_t>(d.domain[i] - 1)), hv.data(), sc.rep_dim) + eps;
  }
  return d;
}

MultiDomainDataset gen_downstream(const Scenario& sc, std::size_t m, Rng& rng) {
  sc.validate();
  MultiDomainDataset d;
  d.x = Mat(m, sc.input_dim);
  d.y.resize(m);
  d.domain.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < sc.input_dim; ++j) d.x(i, j) = rng.uniform();
  }
  const Vec score = true_score(sc, d.x);
  for (std::size_t i = 0; i < m; ++i) {
    if (sc.task == Task::regression) {
      d.y[i] = score[i] + draw_noise(sc, rng);
    } else {
      d.y[i] = rng.uniform() < sigmoid(score[i]) ? 1.0 : 0.0;
    }
  }
  return d;
}

ExcessRisk oracle_excess_risk(const Scenario& sc,
                              const std::function<Vec(const Mat&)>& score_fn,
                              std::size_t n_mc, Rng& rng) {
  if (n_mc < 1000) {
    throw InsufficientSamplesError("oracle_excess_risk: needs n_mc >= 1000, got " +
                                   std::to_string(n_mc));
  }
  const MultiDomainDataset d = gen_downstream(sc, n_mc, rng);
  const Vec pred = score_fn(d.x);
  if (pred.size() != n_mc) throw ShapeError("oracle_excess_risk: score_fn row count mismatch");
  const Vec bayes = true_score(sc, d.x);
  double mean = 0.0, msq = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const double lp = sc.task == Task::regression ? squared_loss(pred[i], d.y[i])
                                                  : logistic_loss(pred[i], d.y[i]);
    const double lb = sc.task == Task::regression ? squared_loss(bayes[i], d.y[i])
                                                  : logistic_loss(bayes[i], d.y[i]);
    const double diff = lp - lb;
    const double delta = diff - mean;
    mean += delta / static_cast<double>(i + 1);
    msq += delta * (diff - mean);
  }
  ExcessRisk out;
  out.estimate = mean;
  out.n_mc = n_mc;
  out.std_error = n_mc > 1 ? std::sqrt(msq / static_cast<double>(n_mc - 1) /
                                       static_cast<double>(n_mc))
                           : 0.0;
  return out;
}

double squared_loss(double score, double y) {
  const double d = score - y;
  return d * d;
}

double logistic_loss(double score, double y) {
  // softplus(score) - y*score, with the softplus branch chosen for stability
  const double sp = score > 0.0 ? score + std::log1p(std::exp(-score))
                                : std::log1p(std::exp(score));
  return sp - y * score;
}

double sigmoid(double score) {
  return score >= 0.0 ? 1.0 / (1.0 + std::exp(-score))
                      : std::exp(score) / (1.0 + std::exp(score));
}

}  // namespace invarep
