#pragma once

#include <functional>

#include "invarep/common.hpp"
#include "invarep/dataset.hpp"

namespace invarep {

enum class Task { regression, classification };

// Which part of the downstream signal survives: with complete transfer the
// auxiliary map q* is identically zero, with no transfer the task head is
// zero, and partial transfer keeps both.
enum class Regime { complete, partial, none };

enum class WarpKind { identity, smoothstep, square };

std::string to_string(Task t);
std::string to_string(Regime r);
std::string to_string(WarpKind w);

// Ground truth for the synthetic studies. The representation h* selects r
// input coordinates (optionally warped by a strictly increasing smooth map);
// the auxiliary reduction A* only reads coordinates h* does not select, so
// the two signal parts are independent by construction.
struct Scenario {
  std::size_t input_dim = 0;   // d
  std::size_t rep_dim = 0;     // r
  std::size_t domains = 0;     // p
  std::size_t aux_dim = 0;     // true reduced dimension of q*'s input

  std::vector<std::size_t> selected;  // r coordinate indices read by h*
  std::vector<WarpKind> warps;        // per selected coordinate
  Mat heads;                          // p x r true upstream heads F*
  Vec task_head;                      // r true downstream head (zero if none)
  Mat aux_mix;                        // aux_dim x d true reduction A*
  double noise_scale = 0.5;           // label noise is uniform on +-noise_scale
  Regime regime = Regime::partial;
  Task task = Task::regression;
  Vec domain_probs;                   // p categorical weights, sum 1

  void validate() const;  // throws ConfigError on any violated invariant
};

// The desk-scale default: d=8, r=3, p=3, aux_dim=2, identity warps, fixed
// overlapping sparse heads (two active entries per domain), A* mixing
// coordinates 3..5, q*(u) = sin(2*pi*u_0) + 0.5*u_1^2.
Scenario default_scenario(Task task = Task::regression, Regime regime = Regime::partial);

// h*(x) for a batch, one representation row per input row.
Mat true_rep(const Scenario& sc, const Mat& x);

// q*(A* x) per row; identically zero under complete transfer.
Vec true_aux(const Scenario& sc, const Mat& x);

// The noiseless downstream score task_head . h*(x) + q*(A* x).
Vec true_score(const Scenario& sc, const Mat& x);

// The q* nonlinearity itself on already-reduced inputs (u has aux_dim cols).
Vec aux_nonlinearity(const Mat& u);

// Upstream draws: domain from domain_probs, x uniform on the cube,
// y = F*_s . h*(x) + eps with eps uniform on +-noise_scale.
MultiDomainDataset gen_upstream(const Scenario& sc, std::size_t n, Rng& rng);

// Downstream draws (domain id 0): regression adds the same bounded noise to
// the true score; classification samples y in {0,1} with the logistic
// probability of the true score.
MultiDomainDataset gen_downstream(const Scenario& sc, std::size_t m, Rng& rng);

struct ExcessRisk {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_mc = 0;
};

// Monte Carlo excess risk of a score function against the scenario's Bayes
// score, using common fresh draws for both sides: squared error on scores for
// regression, log loss through the logistic link for classification.
// n_mc >= 1000 is enforced so the reported standard error is meaningful.
ExcessRisk oracle_excess_risk(const Scenario& sc,
                              const std::function<Vec(const Mat&)>& score_fn,
                              std::size_t n_mc, Rng& rng);

// Pointwise losses used across the library.
double squared_loss(double score, double y);
double logistic_loss(double score, double y);  // y in {0,1}, stable softplus form
double sigmoid(double score);

}  // namespace invarep
