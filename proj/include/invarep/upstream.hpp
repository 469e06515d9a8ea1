#pragma once

#include <functional>
#include <optional>

#include "invarep/dataset.hpp"
#include "invarep/net.hpp"
#include "invarep/transport.hpp"

namespace invarep {

// Pretrained state shared across downstream tasks: the representation network
// plus one linear head per upstream domain, heads kept inside an L2 ball.
struct UpstreamModel {
  NormNet rep;          // d -> rep_dim
  Mat heads;            // domains x rep_dim
  double head_radius = 10.0;
};

// Raw terms of the upstream objective. total is the weighted sum
// fit + invariance_weight * dependence + pinning_weight * pinning +
// head_l1_weight * head_l1.
struct RiskBreakdown {
  double fit = 0.0;         // mean squared residual
  double dependence = 0.0;  // dcov between representation and domain one-hot
  double pinning = 0.0;     // dual Wasserstein-1 to the uniform reference
  double head_l1 = 0.0;     // L1 norm of all heads
  double total = 0.0;
};

struct UpstreamConfig {
  std::size_t rep_dim = 3;
  std::vector<std::size_t> rep_hidden = {32, 32};
  double rep_budget = 16.0;
  double invariance_weight = 10.0;
  double pinning_weight = 10.0;
  double head_l1_weight = 0.01;
  double head_radius = 10.0;

  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double rep_lr = 0.005;
  double head_lr = 0.2;
  // Cosine-annealed learning rates (factor 0.5 (1 + cos(pi epoch / epochs))
  // on both players); the late-phase decay is what lets the sparsity and
  // pinning penalties settle the representation instead of bouncing it
  // around their noise floor.
  bool cosine_lr = true;
  CriticConfig critic;

  // Optional stop once the epoch total changes by less than stop_tol relative
  // over stop_window consecutive epochs.
  bool early_stop = false;
  double early_stop_tol = 1e-5;
  std::size_t early_stop_window = 5;

  // Test instrumentation: called after every optimizer step (batch updates
  // and critic ascent) with the current model and critic, so constraint
  // audits can watch the whole trajectory. Not part of the config schema.
  std::function<void(const UpstreamModel&, const NormNet&)> post_step;

  // When set, history entries are the full-data breakdown under the current
  // critic instead of the mean over minibatch breakdowns.
  bool record_full_risk = false;

  std::uint64_t seed = 0;
};

// Objective terms on one batch. critic may be null only when pinning_weight
// is zero; xi must then still match the batch row count when a critic is
// given. Batches below 4 rows cannot support the dependence U-statistic and
// raise InsufficientSamplesError.
RiskBreakdown empirical_risk(const UpstreamModel& model, const NormNet* critic,
                             const MultiDomainDataset& batch, const Mat& xi,
                             const UpstreamConfig& cfg);

// Analytic parameter gradients of the batch objective, exactly as the
// training loop applies them: the representation net through the fit,
// dependence and pinning terms, the heads through the fit term only (the L1
// term enters as a proximal step, not a gradient). risk is the matching
// pre-step breakdown.
struct UpstreamGradients {
  NetGrads rep;
  Mat heads;
  RiskBreakdown risk;
};
UpstreamGradients upstream_gradients(const UpstreamModel& model, const NormNet* critic,
                                     const MultiDomainDataset& batch, const Mat& xi,
                                     const UpstreamConfig& cfg);

struct UpstreamResult {
  UpstreamModel model;
  NormNet critic;
  std::vector<RiskBreakdown> history;  // one entry per completed epoch
};

// The starting point the one-argument train_upstream draws from rng: a fresh
// budget-projected representation and uniform +-0.1 heads.
UpstreamModel init_upstream_model(std::size_t input_dim, std::size_t domains,
                                  const UpstreamConfig& cfg, Rng& rng);

// Alternating minimization: each epoch runs critic ascent on the full-data
// representation against a fresh uniform reference, then one pass of Adam
// minibatch updates on the representation and heads (heads get the proximal
// L1 step and the L2-ball projection, the representation is projected onto
// its norm budget after every step). Setting rep_lr to zero freezes the
// representation exactly.
UpstreamResult train_upstream(const MultiDomainDataset& data, const UpstreamConfig& cfg,
                              Rng& rng);

// As above but starting from a caller-supplied model (e.g. a frozen known
// representation).
UpstreamResult train_upstream(const MultiDomainDataset& data, const UpstreamConfig& cfg,
                              Rng& rng, UpstreamModel init);

struct SupportReport {
  bool exact = false;              // predicted supports equal the truth everywhere
  std::vector<double> precision;  // per domain; 1 when nothing is predicted active
  std::vector<double> recall;     // per domain; 1 when nothing is truly active
};

// Compares |entry| > threshold against the truth masks.
SupportReport support_recovery(const Mat& f_hat, const std::vector<std::vector<bool>>& truth_masks,
                               double threshold);

// Active-entry masks of a true head matrix (nonzero entries).
std::vector<std::vector<bool>> support_masks(const Mat& heads);

// The learned representation is identifiable only up to a permutation of its
// coordinates, so support comparisons first search for the column reordering
// of f_hat whose thresholded support best matches the truth. Returns perm with
// perm[j] = column of f_hat matched to truth column j.
std::vector<std::size_t> best_support_alignment(const Mat& f_hat, const Mat& truth_heads,
                                                double threshold);

Mat reorder_columns(const Mat& m, const std::vector<std::size_t>& perm);

}  // namespace invarep
