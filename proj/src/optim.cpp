#include "invarep/optim.hpp"

#include <cmath>

namespace invarep {

AdamState::AdamState(OptimConfig cfg_, std::size_t size, double l1, std::string path_)
    : cfg(cfg_), l1_threshold(l1), path(std::move(path_)), m(size, 0.0), v(size, 0.0) {}

void opt_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("opt_step: parameter/gradient/state size mismatch for group '" +
                     state.path + "'");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("opt_step: non-finite gradient in group '" + state.path +
                         "' at index " + std::to_string(i));
    }
  }
  ++state.step;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = state.cfg.learning_rate;
  const double shrink = state.l1_threshold * lr;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double mhat = state.m[i] / corr1;
    const double vhat = state.v[i] / corr2;
    double p = params[i] - lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    if (shrink > 0.0) {
      p = p > shrink ? p - shrink : (p < -shrink ? p + shrink : 0.0);
    }
    params[i] = p;
  }
}

NetOptimizer::NetOptimizer(const NormNet& net, OptimConfig cfg, double l1, std::string path) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    states_.emplace_back(cfg, net.layers[l].weight.size(), l1,
                         path + ".layer" + std::to_string(l) + ".weight");
    states_.emplace_back(cfg, net.layers[l].bias.size(), l1,
                         path + ".layer" + std::to_string(l) + ".bias");
  }
}

void NetOptimizer::step(NormNet& net, const NetGrads& grads) {
  if (states_.size() != 2 * net.layers.size()) {
    throw ShapeError("NetOptimizer: state/network layer count mismatch");
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& layer = net.layers[l];
    const Layer& g = grads.layers[l];
    opt_step(states_[2 * l], {layer.weight.data(), layer.weight.size()},
             {g.weight.data(), g.weight.size()});
    opt_step(states_[2 * l + 1], {layer.bias.data(), layer.bias.size()},
             {g.bias.data(), g.bias.size()});
  }
  ++net.version;
  project_norm(net);
}

void NetOptimizer::set_learning_rate(double lr) {
  for (AdamState& s : states_) s.cfg.learning_rate = lr;
}

void project_l2_ball(double* v, std::size_t n, double radius) {
  const double norm = l2_norm(v, n);
  if (norm > radius) {
    const double c = radius / norm;
    for (std::size_t i = 0; i < n; ++i) v[i] *= c;
  }
}

}  // namespace invarep
