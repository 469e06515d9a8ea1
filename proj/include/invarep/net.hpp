#pragma once

#include <optional>
#include <vector>

#include "invarep/common.hpp"

namespace invarep {

// One affine map of a feedforward network: y = W x + b, weight stored out x in.
struct Layer {
  Mat weight;
  Vec bias;
};

// ReLU feedforward network with a norm budget. The network is the composition
// A_M(relu(A_{M-1}(...relu(A_0 x + b_0)...) + b_{M-1})) + b_M: ReLU between
// consecutive affine maps, none after the last. An optional symmetric clamp
// caps the output at +-output_clamp.
//
// The budget is enforced through weight_norm/project_norm: weight_norm is the
// product of per-layer norms that upper-bounds the network's Lipschitz
// constant in the max norm, and project_norm rescales the final layer whenever
// that product exceeds norm_budget.
struct NormNet {
  std::vector<Layer> layers;
  double norm_budget = 0.0;
  std::optional<double> output_clamp;

  // Bumped by every mutating operation so stale forward caches are detected.
  std::uint64_t version = 0;

  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.back().weight.rows(); }
  std::size_t depth() const { return layers.size(); }
  std::size_t param_count() const;
};

// Builds a network with the given affine-layer dimensions (dims.size() >= 2,
// layer l maps dims[l] -> dims[l+1]). Weights are uniform on
// [-1/sqrt(in_dim), +1/sqrt(in_dim)], biases zero, followed by one projection
// onto the budget.
NormNet make_net(const std::vector<std::size_t>& dims, double norm_budget, Rng& rng,
                 std::optional<double> output_clamp = std::nullopt);

// Intermediate activations retained by forward() for the matching backward().
struct ForwardCache {
  Mat input;
  std::vector<Mat> preact;    // pre-ReLU values per layer; last entry is the
                              // final affine output before any clamp
  std::vector<Mat> postact;   // post-ReLU values, inputs to layers 1..M-1
  std::uint64_t net_version = 0;
  std::size_t batch = 0;
};

// Batched evaluation: x has one sample per row. Throws ShapeError when the
// column count does not match the network input width.
Mat forward(const NormNet& net, const Mat& x);
Mat forward(const NormNet& net, const Mat& x, ForwardCache& cache);

// Parameter gradients mirroring NormNet::layers.
struct NetGrads {
  std::vector<Layer> layers;

  NetGrads() = default;
  explicit NetGrads(const NormNet& net);
  void add_scaled(const NetGrads& other, double scale);
};

// Reverse-mode sweep. out_cotangent holds d(loss)/d(output) per row; returns
// parameter gradients and, if input_cotangent is non-null, d(loss)/d(input).
// The cache must come from a forward() on the same network state, otherwise a
// CacheError is thrown. ReLU and the clamp use derivative zero on their flat
// parts (and at the kink itself).
NetGrads backward(const NormNet& net, const ForwardCache& cache, const Mat& out_cotangent,
                  Mat* input_cotangent = nullptr);

// Norm surrogate kappa: max-row-sum norm of the final weight times the product
// over earlier layers of max(row-sum norm of (weight|bias), 1).
double weight_norm(const NormNet& net);

// Rescales the final layer (weight and bias) by norm_budget / weight_norm when
// the budget is exceeded; otherwise leaves the network untouched.
void project_norm(NormNet& net);

// Stricter projection used for critic ascent: every hidden row is capped at
// unit norm independently and the final layer at the budget, so weight_norm
// stays within budget. Capping rows one at a time matters for ascent; a
// whole-layer rescale couples the rows and freezes gradient ascent at
// arbitrary mixtures of good and bad units.
void project_rows(NormNet& net);

}  // namespace invarep
