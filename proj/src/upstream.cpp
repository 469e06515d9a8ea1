#include "invarep/upstream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "invarep/dcov.hpp"
#include "invarep/optim.hpp"

namespace invarep {
namespace {

void check_batch(const UpstreamModel& model, const MultiDomainDataset& batch) {
  if (batch.size() < 4) {
    throw InsufficientSamplesError("upstream risk: batch has " + std::to_string(batch.size()) +
                                   " rows, needs at least 4");
  }
  if (batch.x.cols() != model.rep.input_dim()) {
    throw ShapeError("upstream risk: feature width mismatch");
  }
}

// Fit residuals y_i - F_{s_i} . h_i and the head-indexed helper products.
Vec residuals(const UpstreamModel& model, const MultiDomainDataset& batch, const Mat& h) {
  Vec r(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto s = static_cast<std::size_t>(batch.domain[i] - 1);
    if (s >= model.heads.rows()) {
      throw ShapeError("upstream risk: domain id " + std::to_string(batch.domain[i]) +
                       " has no head");
    }
    r[i] = batch.y[i] - dot(model.heads.row(s), h.row(i), h.cols());
  }
  return r;
}

double head_l1(const Mat& heads) { return l1_norm(heads.data(), heads.size()); }

RiskBreakdown assemble(const UpstreamConfig& cfg, double fit, double dep, double pin, double l1) {
  RiskBreakdown rb;
  rb.fit = fit;
  rb.dependence = dep;
  rb.pinning = pin;
  rb.head_l1 = l1;
  rb.total = fit + cfg.invariance_weight * dep + cfg.pinning_weight * pin +
             cfg.head_l1_weight * l1;
  return rb;
}

// Cotangent of the critic mean through its input rows: d(mean critic(h)) / dh,
// scaled by 1/budget to match the dual estimate.
Mat critic_input_cotangent(const NormNet& critic, const Mat& h) {
  ForwardCache cache;
  forward(critic, h, cache);
  Mat input_cot;
  const double w = 1.0 / (critic.norm_budget * static_cast<double>(h.rows()));
  backward(critic, cache, Mat(h.rows(), 1, w), &input_cot);
  return input_cot;
}

}  // namespace

RiskBreakdown empirical_risk(const UpstreamModel& model, const NormNet* critic,
                             const MultiDomainDataset& batch, const Mat& xi,
                             const UpstreamConfig& cfg) {
  check_batch(model, batch);
  const Mat h = forward(model.rep, batch.x);
  const Vec resid = residuals(model, batch, h);
  double fit = 0.0;
  for (double r : resid) fit += r * r;
  fit /= static_cast<double>(batch.size());

  const Mat onehot = domain_onehot(batch.domain, model.heads.rows());
  const double dep = dcov_fast(h, onehot);

  double pin = 0.0;
  if (critic != nullptr) {
    pin = w1_dual_estimate(*critic, h, xi);
  } else if (cfg.pinning_weight != 0.0) {
    throw FeasibilityError("upstream risk: pinning weight is nonzero but no critic given");
  }
  return assemble(cfg, fit, dep, pin, head_l1(model.heads));
}

UpstreamGradients upstream_gradients(const UpstreamModel& model, const NormNet* critic,
                                     const MultiDomainDataset& batch, const Mat& xi,
                                     const UpstreamConfig& cfg) {
  check_batch(model, batch);
  const std::size_t b = batch.size();
  const std::size_t p = model.heads.rows();
  const std::size_t r = model.heads.cols();

  ForwardCache cache;
  const Mat h = forward(model.rep, batch.x, cache);
  const Vec resid = residuals(model, batch, h);

  Mat g_h(b, r);
  double fit = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    fit += resid[i] * resid[i];
    const auto s = static_cast<std::size_t>(batch.domain[i] - 1);
    const double c = -2.0 * resid[i] / static_cast<double>(b);
    for (std::size_t j = 0; j < r; ++j) g_h(i, j) = c * model.heads(s, j);
  }
  fit /= static_cast<double>(b);

  double dep_val = 0.0;
  if (cfg.invariance_weight != 0.0) {
    const Mat onehot = domain_onehot(batch.domain, p);
    dep_val = dcov_fast(h, onehot);
    const Mat gd = dcov_grad(h, onehot);
    for (std::size_t i = 0; i < g_h.size(); ++i) {
      g_h.data()[i] += cfg.invariance_weight * gd.data()[i];
    }
  }
  double pin_val = 0.0;
  if (cfg.pinning_weight != 0.0) {
    if (critic == nullptr) {
      throw FeasibilityError("upstream gradients: pinning weight is nonzero but no critic given");
    }
    pin_val = w1_dual_estimate(*critic, h, xi);
    const Mat gc = critic_input_cotangent(*critic, h);
    for (std::size_t i = 0; i < g_h.size(); ++i) {
      g_h.data()[i] += cfg.pinning_weight * gc.data()[i];
    }
  }

  UpstreamGradients g;
  g.rep = backward(model.rep, cache, g_h);
  g.heads = Mat(p, r);
  for (std::size_t i = 0; i < b; ++i) {
    const auto s = static_cast<std::size_t>(batch.domain[i] - 1);
    const double c = -2.0 * resid[i] / static_cast<double>(b);
    for (std::size_t j = 0; j < r; ++j) g.heads(s, j) += c * h(i, j);
  }
  g.risk = assemble(cfg, fit, dep_val, pin_val, head_l1(model.heads));
  return g;
}

UpstreamModel init_upstream_model(std::size_t input_dim, std::size_t domains,
                                  const UpstreamConfig& cfg, Rng& rng) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.rep_hidden.begin(), cfg.rep_hidden.end());
  dims.push_back(cfg.rep_dim);
  UpstreamModel init;
  init.rep = make_net(dims, cfg.rep_budget, rng);
  init.heads = Mat(domains, cfg.rep_dim);
  for (std::size_t i = 0; i < init.heads.size(); ++i) {
    init.heads.data()[i] = rng.uniform(-0.1, 0.1);
  }
  init.head_radius = cfg.head_radius;
  return init;
}

UpstreamResult train_upstream(const MultiDomainDataset& data, const UpstreamConfig& cfg,
                              Rng& rng) {
  return train_upstream(data, cfg, rng,
                        init_upstream_model(data.dim(), count_domains(data), cfg, rng));
}

UpstreamResult train_upstream(const MultiDomainDataset& data, const UpstreamConfig& cfg,
                              Rng& rng, UpstreamModel init) {
  if (cfg.batch_size < 8) {
    throw ConfigError("train_upstream: batch_size must be at least 8");
  }
  if (data.size() < cfg.batch_size) {
    throw InsufficientSamplesError("train_upstream: fewer samples than one batch");
  }
  const std::size_t n = data.size();
  const std::size_t r = init.rep.output_dim();

  UpstreamResult out;
  out.model = std::move(init);
  UpstreamModel& model = out.model;

  std::vector<std::size_t> cdims{r};
  for (std::size_t l = 0; l < cfg.critic.depth; ++l) cdims.push_back(cfg.critic.width);
  cdims.push_back(1);
  CriticAscender ascender(make_net(cdims, cfg.critic.norm_budget, rng), cfg.critic);

  NetOptimizer rep_opt(model.rep, OptimConfig{.learning_rate = cfg.rep_lr}, 0.0, "rep");
  AdamState head_opt(OptimConfig{.learning_rate = cfg.head_lr}, model.heads.size(),
                     cfg.head_l1_weight, "heads");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const bool pin = cfg.pinning_weight != 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.cosine_lr) {
      const double f =
          0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                static_cast<double>(cfg.epochs)));
      rep_opt.set_learning_rate(cfg.rep_lr * f);
      head_opt.cfg.learning_rate = cfg.head_lr * f;
    }
    if (pin) {
      const Mat h_all = forward(model.rep, data.x);
      const Mat xi_all = sample_uniform_ref(n, r, rng);
      ascender.ascend(h_all, xi_all);
      if (cfg.post_step) cfg.post_step(model, ascender.critic());
    }

    rng.shuffle(order);
    RiskBreakdown epoch_mean;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + cfg.batch_size <= n; start += cfg.batch_size) {
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + cfg.batch_size);
      const MultiDomainDataset batch = subset(data, idx);
      const Mat xi_b = pin ? sample_uniform_ref(batch.size(), r, rng) : Mat(batch.size(), r);
      const UpstreamGradients g = upstream_gradients(
          model, pin ? &ascender.critic() : nullptr, batch, xi_b, cfg);

      if (cfg.rep_lr != 0.0) rep_opt.step(model.rep, g.rep);
      opt_step(head_opt, {model.heads.data(), model.heads.size()},
               {g.heads.data(), g.heads.size()});
      project_l2_ball(model.heads.data(), model.heads.size(), model.head_radius);
      if (cfg.post_step) cfg.post_step(model, ascender.critic());

      epoch_mean.fit += g.risk.fit;
      epoch_mean.dependence += g.risk.dependence;
      epoch_mean.pinning += g.risk.pinning;
      epoch_mean.head_l1 += g.risk.head_l1;
      epoch_mean.total += g.risk.total;
      ++batches;
    }

    if (cfg.record_full_risk) {
      const Mat xi_eval = sample_uniform_ref(n, r, rng);
      out.history.push_back(empirical_risk(model, pin ? &ascender.critic() : nullptr, data,
                                           xi_eval, cfg));
    } else {
      const double inv = 1.0 / static_cast<double>(batches);
      epoch_mean.fit *= inv;
      epoch_mean.dependence *= inv;
      epoch_mean.pinning *= inv;
      epoch_mean.head_l1 *= inv;
      epoch_mean.total *= inv;
      out.history.push_back(epoch_mean);
    }

    if (cfg.early_stop && out.history.size() > cfg.early_stop_window) {
      const double now = out.history.back().total;
      const double then =
          out.history[out.history.size() - 1 - cfg.early_stop_window].total;
      const double denom = std::max(std::fabs(then), 1e-12);
      if (std::fabs(now - then) / denom < cfg.early_stop_tol) break;
    }
  }

  out.critic = ascender.critic();
  return out;
}

SupportReport support_recovery(const Mat& f_hat, const std::vector<std::vector<bool>>& truth_masks,
                               double threshold) {
  if (truth_masks.size() != f_hat.rows()) {
    throw ShapeError("support_recovery: mask/domain count mismatch");
  }
  SupportReport rep;
  rep.exact = true;
  for (std::size_t s = 0; s < f_hat.rows(); ++s) {
    if (truth_masks[s].size() != f_hat.cols()) {
      throw ShapeError("support_recovery: mask width mismatch");
    }
    std::size_t predicted = 0, truly = 0, hits = 0;
    for (std::size_t j = 0; j < f_hat.cols(); ++j) {
      const bool active = std::fabs(f_hat(s, j)) > threshold;
      predicted += active;
      truly += truth_masks[s][j];
      hits += active && truth_masks[s][j];
      if (active != truth_masks[s][j]) rep.exact = false;
    }
    rep.precision.push_back(predicted == 0 ? 1.0
                                           : static_cast<double>(hits) /
                                                 static_cast<double>(predicted));
    rep.recall.push_back(truly == 0 ? 1.0
                                    : static_cast<double>(hits) / static_cast<double>(truly));
  }
  return rep;
}

std::vector<std::vector<bool>> support_masks(const Mat& heads) {
  std::vector<std::vector<bool>> masks(heads.rows());
  for (std::size_t s = 0; s < heads.rows(); ++s) {
    for (std::size_t j = 0; j < heads.cols(); ++j) {
      masks[s].push_back(heads(s, j) != 0.0);
    }
  }
  return masks;
}

std::vector<std::size_t> best_support_alignment(const Mat& f_hat, const Mat& truth_heads,
                                                double threshold) {
  if (f_hat.rows() != truth_heads.rows() || f_hat.cols() != truth_heads.cols()) {
    throw ShapeError("best_support_alignment: shape mismatch");
  }
  const std::size_t r = f_hat.cols();
  if (r > 10) throw SizeError("best_support_alignment: permutation search limited to 10 columns");
  std::vector<std::size_t> perm(r), best(r);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  std::size_t best_hits = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t s = 0; s < f_hat.rows(); ++s) {
      for (std::size_t j = 0; j < r; ++j) {
        const bool active = std::fabs(f_hat(s, perm[j])) > threshold;
        hits += active == (truth_heads(s, j) != 0.0);
      }
    }
    if (hits > best_hits) {
      best_hits = hits;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Mat reorder_columns(const Mat& m, const std::vector<std::size_t>& perm) {
  if (perm.size() != m.cols()) throw ShapeError("reorder_columns: permutation size mismatch");
  Mat out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, perm[j]);
  }
  return out;
}

}  // namespace invarep
