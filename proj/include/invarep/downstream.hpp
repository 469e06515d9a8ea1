#pragma once

#include <optional>

#include "invarep/dataset.hpp"
#include "invarep/net.hpp"
#include "invarep/scenario.hpp"
#include "invarep/upstream.hpp"

namespace invarep {

// Fine-tuned predictor: a frozen copy of the upstream representation, a
// sparse linear head on it, and an auxiliary branch q(A x) capturing signal
// the transferred representation does not carry.
struct DownstreamModel {
  NormNet rep;                     // frozen upstream representation
  Vec task_head;                   // rep_dim
  Mat reduction;                   // reduced_dim x input_dim (A)
  NormNet aux;                     // q: reduced_dim -> 1
  bool aux_enabled = true;
  double head_radius = 10.0;
  double reduction_radius = 10.0;
  Task task = Task::regression;
};

// Scores task_head . rep(x) + q(A x) per row (the aux part only when
// enabled). Classification interprets the score through the logistic link.
Vec predict_scores(const DownstreamModel& model, const Mat& x);
Vec predict_proba(const DownstreamModel& model, const Mat& x);

// Raw objective terms; total = fit + independence_weight * dependence +
// head_l1_weight * head_l1 + reduction_fro_weight * reduction_fro.
struct FinetuneBreakdown {
  double fit = 0.0;            // mean squared or logistic loss
  double dependence = 0.0;     // dcov between rep(x) rows and q(A x) values
  double head_l1 = 0.0;        // L1 norm of the task head
  double reduction_fro = 0.0;  // squared Frobenius norm of A
  double total = 0.0;
};

struct FinetuneConfig {
  std::size_t reduced_dim = 2;
  std::vector<std::size_t> reduced_dim_candidates = {1, 2, 4};
  std::vector<std::size_t> aux_hidden = {32, 32};
  double aux_budget = 16.0;

  double independence_weight = 10.0;          // kappa
  std::optional<double> head_l1_weight;       // chi; defaults to 1/sqrt(m)
  double reduction_fro_weight = 0.01;         // zeta
  double head_radius = 10.0;
  double reduction_radius = 10.0;

  std::size_t epochs = 150;
  std::size_t batch_size = 64;
  double head_lr = 0.05;
  double reduction_lr = 0.01;
  double aux_lr = 0.01;
  // Cosine-annealed learning rates on all three players, as upstream.
  bool cosine_lr = true;

  bool train_head = true;   // false trains the aux branch alone (head stays 0)
  bool aux_enabled = true;  // false fine-tunes the linear head alone

  std::uint64_t seed = 0;
};

// Effective chi: the configured value, or 1/sqrt(m) when unset.
double head_l1_weight_for(const FinetuneConfig& cfg, std::size_t m);

// Objective terms on one batch (at least 4 rows).
FinetuneBreakdown finetune_loss(const DownstreamModel& model, const MultiDomainDataset& batch,
                                const FinetuneConfig& cfg, double head_l1_weight);

struct FinetuneResult {
  DownstreamModel model;
  std::vector<FinetuneBreakdown> history;  // per epoch, mean over minibatches
};

// Minibatch Adam on head, reduction and aux network. The representation is
// copied from the upstream model and never updated; the head gets the
// proximal L1 step plus the L2-ball projection, the reduction a plain
// gradient step (including the Frobenius penalty) plus its ball projection,
// and the aux network the norm-budget projection. The reduction is
// initialized with random orthonormal rows rescaled to unit Frobenius norm.
FinetuneResult finetune(const UpstreamModel& upstream, const MultiDomainDataset& data,
                        const FinetuneConfig& cfg, Task task, Rng& rng);

struct Metrics {
  double loss = 0.0;      // mse (regression) or mean log loss (classification)
  double accuracy = 0.0;  // classification only, score > 0 versus label
  double log_loss = 0.0;  // classification only
};

Metrics evaluate(const DownstreamModel& model, const MultiDomainDataset& data);

struct DstarSelection {
  std::size_t best = 0;                  // chosen reduced dimension
  std::vector<std::size_t> candidates;
  std::vector<double> val_loss;          // per candidate
  FinetuneResult best_result;
};

// Fine-tunes one model per candidate reduced dimension under identical seeds
// and picks the lowest validation loss; ties go to the smaller dimension.
DstarSelection select_dstar(const UpstreamModel& upstream, const MultiDomainDataset& train,
                            const MultiDomainDataset& val, const FinetuneConfig& cfg,
                            Task task, Rng& rng);

}  // namespace invarep
