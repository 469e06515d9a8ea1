#include "invarep/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace invarep {
namespace {

constexpr double kFeasibilitySlack = 1e-9;

// Hungarian algorithm with potentials (shortest augmenting paths), O(n^3).
// Indices are 1-based internally; p[j] is the row matched to column j.
double solve_assignment(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
  return total;
}

void check_critic(const NormNet& critic, const Mat& a, const Mat& b) {
  if (critic.output_dim() != 1) throw ShapeError("critic must be scalar-valued");
  if (a.cols() != b.cols() || a.cols() != critic.input_dim()) {
    throw ShapeError("critic/sample dimension mismatch");
  }
  if (a.rows() == 0 || b.rows() == 0) {
    throw InsufficientSamplesError("dual estimate needs nonempty samples");
  }
}

double mean_output(const NormNet& net, const Mat& x) {
  const Mat out = forward(net, x);
  double s = 0.0;
  for (std::size_t i = 0; i < out.rows(); ++i) s += out(i, 0);
  return s / static_cast<double>(out.rows());
}

}  // namespace

double w1_exact_1d(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ShapeError("w1_exact_1d: size mismatch");
  if (a.empty()) throw InsufficientSamplesError("w1_exact_1d: empty samples");
  Vec as = a, bs = b;
  std::sort(as.begin(), as.end());
  std::sort(bs.begin(), bs.end());
  double s = 0.0;
  for (std::size_t i = 0; i < as.size(); ++i) s += std::fabs(as[i] - bs[i]);
  return s / static_cast<double>(as.size());
}

double w1_exact_matching(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("w1_exact_matching: shape mismatch");
  }
  if (a.rows() == 0) throw InsufficientSamplesError("w1_exact_matching: empty samples");
  if (a.rows() > 64) {
    throw SizeError("w1_exact_matching: limited to 64 rows, got " + std::to_string(a.rows()));
  }
  const std::size_t n = a.rows();
  Mat cost(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cost(i, j) = euclid_dist(a.row(i), b.row(j), a.cols());
    }
  }
  return solve_assignment(cost) / static_cast<double>(n);
}

double w1_dual_estimate(const NormNet& critic, const Mat& a, const Mat& b) {
  check_critic(critic, a, b);
  const double k = weight_norm(critic);
  if (k > critic.norm_budget + kFeasibilitySlack) {
    throw FeasibilityError("critic norm " + std::to_string(k) + " exceeds budget " +
                           std::to_string(critic.norm_budget));
  }
  return (mean_output(critic, a) - mean_output(critic, b)) / critic.norm_budget;
}

CriticAscender::CriticAscender(NormNet critic, CriticConfig cfg)
    : critic_(std::move(critic)), cfg_(cfg) {
  // Adaptive per-coordinate updates are poison here: they hand every weight
  // the same step size, so coordinates with negligible gradient grow as fast
  // as the witness direction and the norm projection spreads the budget over
  // junk. Plain projected gradient ascent keeps steps proportional to signal.
  project_rows(critic_);
}

void CriticAscender::ascend(const Mat& a, const Mat& b) {
  check_critic(critic_, a, b);
  const double wa = 1.0 / static_cast<double>(a.rows());
  const double wb = 1.0 / static_cast<double>(b.rows());
  for (std::size_t s = 0; s < cfg_.ascent_steps; ++s) {
    ForwardCache ca, cb;
    forward(critic_, a, ca);
    forward(critic_, b, cb);
    NetGrads ga = backward(critic_, ca, Mat(a.rows(), 1, wa));
    NetGrads gb = backward(critic_, cb, Mat(b.rows(), 1, -wb));
    ga.add_scaled(gb, 1.0);
    for (std::size_t l = 0; l < critic_.layers.size(); ++l) {
      Layer& layer = critic_.layers[l];
      const Layer& g = ga.layers[l];
      for (std::size_t i = 0; i < layer.weight.size(); ++i) {
        layer.weight.data()[i] += cfg_.learning_rate * g.weight.data()[i];
      }
      for (std::size_t i = 0; i < layer.bias.size(); ++i) {
        layer.bias[i] += cfg_.learning_rate * g.bias[i];
      }
    }
    project_rows(critic_);
  }
}

NormNet critic_ascent(NormNet critic, const Mat& a, const Mat& b, const CriticConfig& cfg) {
  CriticAscender asc(std::move(critic), cfg);
  asc.ascend(a, b);
  return asc.critic();
}

Mat sample_uniform_ref(std::size_t n, std::size_t dim, Rng& rng) {
  Mat m(n, dim);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

}  // namespace invarep
