#pragma once

#include <cmath>
#include <functional>

#include "invarep/common.hpp"
#include "invarep/net.hpp"

namespace testhelp {

using invarep::Mat;
using invarep::NormNet;
using invarep::Rng;
using invarep::Vec;

inline Mat random_mat(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
  Mat m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Central finite difference of a scalar function at x.
inline double central_diff(const std::function<double(double)>& f, double x, double step) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

// Relative error with an absolute floor so near-zero gradients compare sanely.
inline double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max({std::fabs(got), std::fabs(want), 1e-8});
}

// Worst entry error relative to the overall gradient scale; individual
// entries can be arbitrarily small, so per-entry relative error would turn FD
// round-off on negligible components into spurious failures.
inline double vec_rel_err(const Vec& got, const Vec& want) {
  double scale = 1e-8, worst = 0.0;
  for (double w : want) scale = std::max(scale, std::fabs(w));
  for (double g : got) scale = std::max(scale, std::fabs(g));
  for (std::size_t i = 0; i < got.size(); ++i) {
    worst = std::max(worst, std::fabs(got[i] - want[i]) / scale);
  }
  return worst;
}

// Finite-difference check of d(loss)/d(param) over every parameter of a net,
// where loss(net) re-runs a full forward pass. Returns the worst error
// relative to the gradient scale.
inline double fd_check_net(NormNet& net, const std::function<double(const NormNet&)>& loss,
                           const Vec& analytic, double step = 1e-5) {
  Vec fd;
  for (auto& layer : net.layers) {
    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
      double& p = layer.weight.data()[i];
      const double orig = p;
      fd.push_back(central_diff(
          [&](double v) {
            p = v;
            return loss(net);
          },
          orig, step));
      p = orig;
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      double& p = layer.bias[i];
      const double orig = p;
      fd.push_back(central_diff(
          [&](double v) {
            p = v;
            return loss(net);
          },
          orig, step));
      p = orig;
    }
  }
  return vec_rel_err(analytic, fd);
}

// Smallest margin of any preactivation from its ReLU kink (and of the output
// from the clamp edge). Finite differences are only valid when no probe can
// cross a kink, so FD fixtures require a healthy margin.
inline double min_kink_margin(const NormNet& net, const Mat& x) {
  invarep::ForwardCache cache;
  invarep::forward(net, x, cache);
  double margin = 1e300;
  for (std::size_t l = 0; l + 1 < cache.preact.size(); ++l) {
    const Mat& pre = cache.preact[l];
    for (std::size_t i = 0; i < pre.size(); ++i) {
      margin = std::min(margin, std::fabs(pre.data()[i]));
    }
  }
  if (net.output_clamp) {
    const Mat& pre = cache.preact.back();
    for (std::size_t i = 0; i < pre.size(); ++i) {
      margin = std::min(margin, std::fabs(std::fabs(pre.data()[i]) - *net.output_clamp));
    }
  }
  return margin;
}

// Flattens parameter gradients in the same order fd_check_net walks them.
inline Vec flatten_grads(const invarep::NetGrads& g) {
  Vec out;
  for (const auto& layer : g.layers) {
    out.insert(out.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

}  // namespace testhelp
