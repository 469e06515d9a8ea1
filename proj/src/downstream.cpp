#include "invarep/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "invarep/dcov.hpp"
#include "invarep/optim.hpp"

namespace invarep {
namespace {

Mat reduce_inputs(const Mat& reduction, const Mat& x) {
  Mat u(x.rows(), reduction.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < reduction.rows(); ++k) {
      u(i, k) = dot(reduction.row(k), x.row(i), x.cols());
    }
  }
  return u;
}

double fit_loss(Task task, double score, double y) {
  return task == Task::regression ? squared_loss(score, y) : logistic_loss(score, y);
}

// d(fit)/d(score) for one sample.
double fit_slope(Task task, double score, double y) {
  return task == Task::regression ? 2.0 * (score - y) : sigmoid(score) - y;
}

double fro_sq(const Mat& m) { return dot(m.data(), m.data(), m.size()); }

// Random rows made orthonormal, then the whole matrix rescaled to Frobenius
// norm 1. Gaussian entries come from Box-Muller over the deterministic
// uniform stream.
Mat init_reduction(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows > cols) throw ConfigError("reduction: reduced_dim exceeds input_dim");
  Mat a(rows, cols);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double u1 = std::max(rng.uniform(), 1e-300);
    const double u2 = rng.uniform();
    a.data()[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double proj = dot(a.row(i), a.row(j), cols);
      for (std::size_t c = 0; c < cols; ++c) a(i, c) -= proj * a(j, c);
    }
    const double norm = l2_norm(a.row(i), cols);
    if (norm < 1e-12) throw NumericError("reduction init: degenerate row");
    for (std::size_t c = 0; c < cols; ++c) a(i, c) /= norm;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] *= scale;
  return a;
}

FinetuneBreakdown assemble(const FinetuneConfig& cfg, double chi, double fit, double dep,
                           double l1, double fro) {
  FinetuneBreakdown fb;
  fb.fit = fit;
  fb.dependence = dep;
  fb.head_l1 = l1;
  fb.reduction_fro = fro;
  fb.total = fit + cfg.independence_weight * dep + chi * l1 +
             cfg.reduction_fro_weight * fro;
  return fb;
}

}  // namespace

double head_l1_weight_for(const FinetuneConfig& cfg, std::size_t m) {
  if (cfg.head_l1_weight) return *cfg.head_l1_weight;
  if (m == 0) throw InsufficientSamplesError("head_l1_weight_for: empty data");
  return 1.0 / std::sqrt(static_cast<double>(m));
}

Vec predict_scores(const DownstreamModel& model, const Mat& x) {
  const Mat h = forward(model.rep, x);
  Vec scores(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    scores[i] = dot(model.task_head.data(), h.row(i), model.task_head.size());
  }
  if (model.aux_enabled) {
    const Mat q = forward(model.aux, reduce_inputs(model.reduction, x));
    for (std::size_t i = 0; i < x.rows(); ++i) scores[i] += q(i, 0);
  }
  return scores;
}

Vec predict_proba(const DownstreamModel& model, const Mat& x) {
  Vec s = predict_scores(model, x);
  for (double& v : s) v = sigmoid(v);
  return s;
}

FinetuneBreakdown finetune_loss(const DownstreamModel& model, const MultiDomainDataset& batch,
                                const FinetuneConfig& cfg, double head_l1_weight) {
  if (batch.size() < 4) {
    throw InsufficientSamplesError("finetune_loss: batch has " + std::to_string(batch.size()) +
                                   " rows, needs at least 4");
  }
  const Mat h = forward(model.rep, batch.x);
  Vec scores(batch.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    scores[i] = dot(model.task_head.data(), h.row(i), model.task_head.size());
  }
  double dep = 0.0;
  if (model.aux_enabled) {
    const Mat q = forward(model.aux, reduce_inputs(model.reduction, batch.x));
    for (std::size_t i = 0; i < batch.size(); ++i) scores[i] += q(i, 0);
    if (cfg.independence_weight != 0.0) dep = dcov_fast(h, q);
  }
  double fit = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    fit += fit_loss(model.task, scores[i], batch.y[i]);
  }
  fit /= static_cast<double>(batch.size());
  const double l1 = l1_norm(model.task_head.data(), model.task_head.size());
  const double fro = model.aux_enabled ? fro_sq(model.reduction) : 0.0;
  return assemble(cfg, head_l1_weight, fit, dep, l1, fro);
}

FinetuneResult finetune(const UpstreamModel& upstream, const MultiDomainDataset& data,
                        const FinetuneConfig& cfg, Task task, Rng& rng) {
  if (cfg.batch_size < 8) throw ConfigError("finetune: batch_size must be at least 8");
  if (data.size() < cfg.batch_size) {
    throw InsufficientSamplesError("finetune: fewer samples than one batch");
  }
  const std::size_t m = data.size();
  const std::size_t r = upstream.rep.output_dim();
  const double chi = head_l1_weight_for(cfg, m);

  FinetuneResult out;
  DownstreamModel& model = out.model;
  model.rep = upstream.rep;  // frozen copy, never stepped below
  model.task_head.assign(r, 0.0);
  model.aux_enabled = cfg.aux_enabled;
  model.head_radius = cfg.head_radius;
  model.reduction_radius = cfg.reduction_radius;
  model.task = task;
  if (cfg.aux_enabled) {
    model.reduction = init_reduction(cfg.reduced_dim, data.dim(), rng);
    std::vector<std::size_t> qdims{cfg.reduced_dim};
    qdims.insert(qdims.end(), cfg.aux_hidden.begin(), cfg.aux_hidden.end());
    qdims.push_back(1);
    model.aux = make_net(qdims, cfg.aux_budget, rng);
  } else {
    model.reduction = Mat(0, data.dim());
    model.aux = NormNet{};
  }

  // The representation never changes, so its outputs are computed once.
  const Mat h_all = forward(model.rep, data.x);

  AdamState head_opt(OptimConfig{.learning_rate = cfg.head_lr}, r, chi, "task_head");
  AdamState red_opt(OptimConfig{.learning_rate = cfg.reduction_lr}, model.reduction.size(),
                    0.0, "reduction");
  NetOptimizer aux_opt;
  if (cfg.aux_enabled) {
    aux_opt = NetOptimizer(model.aux, OptimConfig{.learning_rate = cfg.aux_lr}, 0.0, "aux");
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.cosine_lr) {
      const double f =
          0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                static_cast<double>(cfg.epochs)));
      head_opt.cfg.learning_rate = cfg.head_lr * f;
      red_opt.cfg.learning_rate = cfg.reduction_lr * f;
      if (cfg.aux_enabled) aux_opt.set_learning_rate(cfg.aux_lr * f);
    }
    rng.shuffle(order);
    FinetuneBreakdown mean;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + cfg.batch_size <= m; start += cfg.batch_size) {
      const std::size_t b = cfg.batch_size;
      Mat xb(b, data.dim()), hb(b, r);
      Vec yb(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t src = order[start + i];
        std::copy(data.x.row(src), data.x.row(src) + data.dim(), xb.row(i));
        std::copy(h_all.row(src), h_all.row(src) + r, hb.row(i));
        yb[i] = data.y[src];
      }

      Mat ub, qb;
      ForwardCache qcache;
      if (cfg.aux_enabled) {
        ub = reduce_inputs(model.reduction, xb);
        qb = forward(model.aux, ub, qcache);
      }
      Vec scores(b, 0.0);
      double fit = 0.0;
      Vec slope(b);
      for (std::size_t i = 0; i < b; ++i) {
        scores[i] = dot(model.task_head.data(), hb.row(i), r);
        if (cfg.aux_enabled) scores[i] += qb(i, 0);
        fit += fit_loss(task, scores[i], yb[i]);
        slope[i] = fit_slope(task, scores[i], yb[i]) / static_cast<double>(b);
      }
      fit /= static_cast<double>(b);

      double dep = 0.0;
      Mat g_q;
      if (cfg.aux_enabled) {
        g_q = Mat(b, 1);
        for (std::size_t i = 0; i < b; ++i) g_q(i, 0) = slope[i];
        if (cfg.independence_weight != 0.0) {
          dep = dcov_fast(hb, qb);
          const Mat gd = dcov_grad(qb, hb);
          for (std::size_t i = 0; i < b; ++i) {
            g_q(i, 0) += cfg.independence_weight * gd(i, 0);
          }
        }
      }

      if (cfg.train_head) {
        Vec g_head(r, 0.0);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < r; ++j) g_head[j] += slope[i] * hb(i, j);
        }
        opt_step(head_opt, {model.task_head.data(), r}, {g_head.data(), r});
        project_l2_ball(model.task_head.data(), r, model.head_radius);
      }

      if (cfg.aux_enabled) {
        Mat u_cot;
        const NetGrads aux_grads = backward(model.aux, qcache, g_q, &u_cot);
        aux_opt.step(model.aux, aux_grads);

        Mat g_red(model.reduction.rows(), model.reduction.cols());
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t k = 0; k < model.reduction.rows(); ++k) {
            const double w = u_cot(i, k);
            for (std::size_t c = 0; c < model.reduction.cols(); ++c) {
              g_red(k, c) += w * xb(i, c);
            }
          }
        }
        for (std::size_t i = 0; i < g_red.size(); ++i) {
          g_red.data()[i] += 2.0 * cfg.reduction_fro_weight * model.reduction.data()[i];
        }
        opt_step(red_opt, {model.reduction.data(), model.reduction.size()},
                 {g_red.data(), g_red.size()});
        project_l2_ball(model.reduction.data(), model.reduction.size(),
                        model.reduction_radius);
      }

      const double l1 = l1_norm(model.task_head.data(), r);
      const double fro = cfg.aux_enabled ? fro_sq(model.reduction) : 0.0;
      const FinetuneBreakdown fb = assemble(cfg, chi, fit, dep, l1, fro);
      mean.fit += fb.fit;
      mean.dependence += fb.dependence;
      mean.head_l1 += fb.head_l1;
      mean.reduction_fro += fb.reduction_fro;
      mean.total += fb.total;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    mean.fit *= inv;
    mean.dependence *= inv;
    mean.head_l1 *= inv;
    mean.reduction_fro *= inv;
    mean.total *= inv;
    out.history.push_back(mean);
  }
  return out;
}

Metrics evaluate(const DownstreamModel& model, const MultiDomainDataset& data) {
  if (data.size() == 0) throw InsufficientSamplesError("evaluate: empty data");
  const Vec scores = predict_scores(model, data.x);
  Metrics m;
  if (model.task == Task::regression) {
    for (std::size_t i = 0; i < data.size(); ++i) m.loss += squared_loss(scores[i], data.y[i]);
    m.loss /= static_cast<double>(data.size());
  } else {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      m.log_loss += logistic_loss(scores[i], data.y[i]);
      hits += (scores[i] > 0.0) == (data.y[i] > 0.5);
    }
    m.log_loss /= static_cast<double>(data.size());
    m.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
    m.loss = m.log_loss;
  }
  return m;
}

DstarSelection select_dstar(const UpstreamModel& upstream, const MultiDomainDataset& train,
                            const MultiDomainDataset& val, const FinetuneConfig& cfg,
                            Task task, Rng& rng) {
  if (cfg.reduced_dim_candidates.empty()) {
    throw ConfigError("select_dstar: no candidates given");
  }
  DstarSelection sel;
  sel.candidates = cfg.reduced_dim_candidates;
  const std::uint64_t base_seed = rng.engine()();
  bool have = false;
  double best_loss = 0.0;
  for (const std::size_t cand : cfg.reduced_dim_candidates) {
    FinetuneConfig c = cfg;
    c.reduced_dim = cand;
    Rng local(base_seed);  // identical stream per candidate: same data order
    FinetuneResult res = finetune(upstream, train, c, task, local);
    const double loss = evaluate(res.model, val).loss;
    sel.val_loss.push_back(loss);
    const bool better = !have || loss < best_loss ||
                        (loss == best_loss && cand < sel.best);
    if (better) {
      have = true;
      best_loss = loss;
      sel.best = cand;
      sel.best_result = std::move(res);
    }
  }
  return sel;
}

}  // namespace invarep
