#pragma once

#include <span>
#include <string>
#include <vector>

#include "invarep/common.hpp"
#include "invarep/net.hpp"

namespace invarep {

struct OptimConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam state for one parameter group, with an optional proximal L1 step: after
// the Adam update each entry is soft-thresholded by l1_threshold *
// learning_rate, so exact zeros are reachable.
struct AdamState {
  OptimConfig cfg;
  double l1_threshold = 0.0;
  std::string path;  // names the group in numeric-error messages
  long step = 0;
  Vec m, v;

  AdamState() = default;
  AdamState(OptimConfig cfg, std::size_t size, double l1 = 0.0, std::string path = "");
};

// One optimizer step in place. Throws NumericError naming the parameter group
// if any gradient entry is non-finite.
void opt_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Convenience wrapper stepping a whole network: one Adam group per tensor.
// Bumps the network version and projects back onto the norm budget.
class NetOptimizer {
 public:
  NetOptimizer() = default;
  NetOptimizer(const NormNet& net, OptimConfig cfg, double l1 = 0.0,
               std::string path = "net");

  void step(NormNet& net, const NetGrads& grads);

  // For learning-rate schedules; moment estimates are kept.
  void set_learning_rate(double lr);

 private:
  std::vector<AdamState> states_;
};

// Projects v onto the closed L2 ball of the given radius (rescales when the
// norm exceeds it).
void project_l2_ball(double* v, std::size_t n, double radius);

}  // namespace invarep
