#pragma once

#include "invarep/common.hpp"
#include "invarep/net.hpp"

namespace invarep {

// Exact Wasserstein-1 distance between two equal-weight empirical measures on
// the line: sorts both samples and averages |a_(i) - b_(i)|. Requires equal
// nonempty sizes.
double w1_exact_1d(const Vec& a, const Vec& b);

// Exact Wasserstein-1 distance between equal-size empirical measures in R^r,
// solved as a min-cost perfect matching over Euclidean costs. Both inputs need
// the same row and column counts; SizeError above 64 rows (the solver is
// O(n^3) and exists as an oracle, not a production path).
double w1_exact_matching(const Mat& a, const Mat& b);

// Dual (critic-based) Wasserstein-1 estimate: (mean critic(a) - mean
// critic(b)) / critic_budget. The critic must be scalar-valued and within its
// norm budget up to 1e-9 (FeasibilityError otherwise); the estimate then never
// exceeds the exact distance (the critic's Lipschitz constant is at most the
// budget).
double w1_dual_estimate(const NormNet& critic, const Mat& a, const Mat& b);

struct CriticConfig {
  std::size_t width = 16;
  std::size_t depth = 2;          // hidden layers
  double norm_budget = 4.0;
  std::size_t ascent_steps = 5;   // per call / per outer iteration
  double learning_rate = 0.05;
};

// Projected gradient ascent on the dual objective mean critic(a) - mean
// critic(b): plain gradient steps with a per-row norm projection after each.
// The critic is kept across calls so outer loops warm-start.
class CriticAscender {
 public:
  CriticAscender(NormNet critic, CriticConfig cfg);

  // Runs cfg.ascent_steps ascent steps against the given samples.
  void ascend(const Mat& a, const Mat& b);

  const NormNet& critic() const { return critic_; }
  NormNet& critic() { return critic_; }

 private:
  NormNet critic_;
  CriticConfig cfg_;
};

// One-shot form of the above with fresh optimizer state.
NormNet critic_ascent(NormNet critic, const Mat& a, const Mat& b, const CriticConfig& cfg);

// n i.i.d. rows uniform on [0,1]^dim, the reference measure the upstream
// representation is pinned to.
Mat sample_uniform_ref(std::size_t n, std::size_t dim, Rng& rng);

}  // namespace invarep
