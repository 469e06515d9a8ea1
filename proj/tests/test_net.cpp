#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "invarep/net.hpp"
#include "invarep/optim.hpp"

using namespace invarep;
using testhelp::fd_check_net;
using testhelp::flatten_grads;
using testhelp::random_mat;
using testhelp::rel_err;

namespace {

// Independent per-sample re-evaluation of the network with plain loops.
Vec eval_single(const NormNet& net, const double* x) {
  Vec cur(x, x + net.input_dim());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    Vec next(layer.weight.rows());
    for (std::size_t j = 0; j < layer.weight.rows(); ++j) {
      double s = layer.bias[j];
      for (std::size_t k = 0; k < layer.weight.cols(); ++k) s += layer.weight(j, k) * cur[k];
      next[j] = l + 1 < net.layers.size() && s < 0.0 ? 0.0 : s;
    }
    cur = std::move(next);
  }
  if (net.output_clamp) {
    for (double& v : cur) v = std::min(std::max(v, -*net.output_clamp), *net.output_clamp);
  }
  return cur;
}

NormNet random_net(Rng& rng, bool clamped = false) {
  const std::vector<std::size_t> dims{2 + rng.below(3), 2 + rng.below(4), 2 + rng.below(4),
                                      1 + rng.below(3)};
  return make_net(dims, 2.0 + 6.0 * rng.uniform(), rng,
                  clamped ? std::optional<double>(0.5 + rng.uniform()) : std::nullopt);
}

}  // namespace

TEST_CASE("forward: single identity layer reproduces the input") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{1.0, 0.0}, {0.0, 1.0}}), {0.0, 0.0}});
  net.norm_budget = 10.0;
  const Mat x = Mat::from_rows({{0.3, -0.7}, {2.0, 5.0}});
  const Mat y = forward(net, x);
  CHECK(y == x);
}

TEST_CASE("forward: zero weights give zero output") {
  NormNet net;
  net.layers.push_back({Mat(3, 2), Vec(3, 0.0)});
  net.norm_budget = 1.0;
  const Mat y = forward(net, Mat::from_rows({{1.0, 2.0}}));
  for (std::size_t j = 0; j < 3; ++j) CHECK(y(0, j) == 0.0);
}

TEST_CASE("forward: hidden ReLU clips negative preactivations") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{1.0}}), {0.0}});
  net.layers.push_back({Mat::from_rows({{1.0}}), {0.0}});
  net.norm_budget = 10.0;
  CHECK(forward(net, Mat::from_rows({{-3.0}}))(0, 0) == 0.0);
  CHECK(forward(net, Mat::from_rows({{3.0}}))(0, 0) == 3.0);
}

TEST_CASE("forward: output clamp caps magnitudes exactly") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{5.0}}), {0.0}});
  net.norm_budget = 10.0;
  net.output_clamp = 2.0;
  CHECK(forward(net, Mat::from_rows({{10.0}}))(0, 0) == 2.0);
  CHECK(forward(net, Mat::from_rows({{-10.0}}))(0, 0) == -2.0);
  CHECK(forward(net, Mat::from_rows({{0.1}}))(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("forward: batch output matches per-sample scalar evaluation") {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    NormNet net = random_net(rng, t % 3 == 0);
    const Mat x = random_mat(5, net.input_dim(), rng, -2.0, 2.0);
    const Mat y = forward(net, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const Vec single = eval_single(net, x.row(i));
      for (std::size_t j = 0; j < net.output_dim(); ++j) CHECK(y(i, j) == single[j]);
    }
  }
}

TEST_CASE("forward: rejects mismatched input width") {
  Rng rng(1);
  NormNet net = make_net({3, 4, 2}, 5.0, rng);
  CHECK_THROWS_AS(forward(net, Mat(2, 4)), ShapeError);
}

TEST_CASE("backward: gradients match finite differences on random nets") {
  Rng rng(23);
  double worst = 0.0;
  int done = 0;
  while (done < 20) {
    NormNet net = random_net(rng, done % 4 == 0);
    const Mat x = random_mat(4, net.input_dim(), rng, -1.5, 1.5);
    if (testhelp::min_kink_margin(net, x) < 1e-3) continue;  // FD would cross a kink
    ++done;
    const Mat cot = random_mat(4, net.output_dim(), rng);
    const auto loss = [&](const NormNet& n) {
      const Mat y = forward(n, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += cot.data()[i] * y.data()[i];
      return s;
    };
    ForwardCache cache;
    forward(net, x, cache);
    const NetGrads grads = backward(net, cache, cot);
    worst = std::max(worst, fd_check_net(net, loss, flatten_grads(grads)));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("backward: input cotangent matches finite differences") {
  Rng rng(29);
  NormNet net = random_net(rng);
  Mat x = random_mat(3, net.input_dim(), rng);
  while (testhelp::min_kink_margin(net, x) < 1e-3) x = random_mat(3, net.input_dim(), rng);
  const Mat cot = random_mat(3, net.output_dim(), rng);
  ForwardCache cache;
  forward(net, x, cache);
  Mat input_cot;
  backward(net, cache, cot, &input_cot);
  Vec fd, analytic(input_cot.data(), input_cot.data() + input_cot.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double& p = x.data()[i];
    const double orig = p;
    fd.push_back(testhelp::central_diff(
        [&](double v) {
          p = v;
          const Mat y = forward(net, x);
          double s = 0.0;
          for (std::size_t k = 0; k < y.size(); ++k) s += cot.data()[k] * y.data()[k];
          return s;
        },
        orig, 1e-5));
    p = orig;
  }
  CHECK(testhelp::vec_rel_err(analytic, fd) <= 1e-4);
}

TEST_CASE("backward: ReLU uses derivative zero at the kink") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{1.0}}), {0.0}});
  net.layers.push_back({Mat::from_rows({{1.0}}), {0.0}});
  net.norm_budget = 10.0;
  ForwardCache cache;
  forward(net, Mat::from_rows({{0.0}}), cache);  // preactivation exactly 0
  const NetGrads g = backward(net, cache, Mat::from_rows({{1.0}}));
  CHECK(g.layers[0].bias[0] == 0.0);
  CHECK(g.layers[0].weight(0, 0) == 0.0);
}

TEST_CASE("backward: stale cache is rejected") {
  Rng rng(5);
  NormNet net = make_net({2, 3, 1}, 1.0, rng);
  ForwardCache cache;
  forward(net, Mat(2, 2, 0.5), cache);
  ++net.version;  // as any mutating operation would
  CHECK_THROWS_AS(backward(net, cache, Mat(2, 1, 1.0)), CacheError);
}

TEST_CASE("backward: mismatched cotangent shape is rejected") {
  Rng rng(6);
  NormNet net = make_net({2, 3, 1}, 1.0, rng);
  ForwardCache cache;
  forward(net, Mat(2, 2, 0.5), cache);
  CHECK_THROWS_AS(backward(net, cache, Mat(3, 1, 1.0)), ShapeError);
}

TEST_CASE("weight_norm: single layer without bias is the max row sum") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{1.0}}), {0.0}});
  net.norm_budget = 10.0;
  CHECK(weight_norm(net) == 1.0);
}

TEST_CASE("weight_norm: hand-computed two-layer value") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{1.0, -2.0}, {0.5, 0.0}}), {0.5, 0.0}});
  net.layers.push_back({Mat::from_rows({{2.0, -1.0}}), {0.0}});
  net.norm_budget = 100.0;
  // first block rows: |1|+|-2|+|0.5| = 3.5 and |0.5|: max(3.5,1) = 3.5
  // final layer: |2|+|-1| = 3
  CHECK(weight_norm(net) == doctest::Approx(10.5));
}

TEST_CASE("weight_norm: early layers below norm one count as one") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{0.1, 0.1}}), {0.0}});
  net.layers.push_back({Mat::from_rows({{4.0}}), {0.0}});
  net.norm_budget = 100.0;
  CHECK(weight_norm(net) == 4.0);
}

TEST_CASE("weight_norm: agrees with an independent row-sum recomputation") {
  Rng rng(31);
  for (int t = 0; t < 10; ++t) {
    NormNet net = random_net(rng);
    double expect = 0.0;
    for (std::size_t j = 0; j < net.layers.back().weight.rows(); ++j) {
      double row = 0.0;
      for (std::size_t k = 0; k < net.layers.back().weight.cols(); ++k) {
        row += std::fabs(net.layers.back().weight(j, k));
      }
      expect = std::max(expect, row);
    }
    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
      double block = 0.0;
      for (std::size_t j = 0; j < net.layers[l].weight.rows(); ++j) {
        double row = std::fabs(net.layers[l].bias[j]);
        for (std::size_t k = 0; k < net.layers[l].weight.cols(); ++k) {
          row += std::fabs(net.layers[l].weight(j, k));
        }
        block = std::max(block, row);
      }
      expect *= std::max(block, 1.0);
    }
    CHECK(weight_norm(net) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("project_norm: leaves feasible networks untouched") {
  Rng rng(37);
  NormNet net = make_net({2, 3, 1}, 100.0, rng);
  const NormNet before = net;
  project_norm(net);
  CHECK(net.layers[0].weight == before.layers[0].weight);
  CHECK(net.layers[1].weight == before.layers[1].weight);
  CHECK(net.version == before.version);
}

TEST_CASE("project_norm: norm four times the budget scales output by a quarter") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{4.0}}), {0.0}});
  net.norm_budget = 1.0;
  const Mat x = Mat::from_rows({{3.0}});
  const double before = forward(net, x)(0, 0);
  project_norm(net);
  CHECK(forward(net, x)(0, 0) == before * 0.25);
  CHECK(weight_norm(net) == 1.0);
}

TEST_CASE("project_norm: feasibility after projection on random nets") {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    NormNet net = random_net(rng);
    // Inflate the final layer so most draws start infeasible.
    for (std::size_t i = 0; i < net.layers.back().weight.size(); ++i) {
      net.layers.back().weight.data()[i] *= 50.0 * rng.uniform();
    }
    ++net.version;
    project_norm(net);
    CHECK(weight_norm(net) <= net.norm_budget + 1e-12);
  }
}

TEST_CASE("project_rows: caps each hidden row and the final layer independently") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{0.25, 0.25}, {1.5, 0.0}}), {0.0, 0.5}});
  net.layers.push_back({Mat::from_rows({{8.0, 0.0}}), {2.0}});
  net.norm_budget = 4.0;
  project_rows(net);
  // Row 0 (norm 0.5) untouched; row 1 (norm 2.0) halved, bias included.
  CHECK(net.layers[0].weight(0, 0) == 0.25);
  CHECK(net.layers[0].weight(0, 1) == 0.25);
  CHECK(net.layers[0].bias[0] == 0.0);
  CHECK(net.layers[0].weight(1, 0) == 0.75);
  CHECK(net.layers[0].bias[1] == 0.25);
  // Final layer (norm 8) scaled to the budget.
  CHECK(net.layers[1].weight(0, 0) == 4.0);
  CHECK(net.layers[1].bias[0] == 1.0);
  CHECK(weight_norm(net) == 4.0);
}

TEST_CASE("project_rows: random nets end feasible with unit hidden rows") {
  Rng rng(39);
  for (int t = 0; t < 30; ++t) {
    NormNet net = random_net(rng);
    for (auto& layer : net.layers) {
      for (std::size_t i = 0; i < layer.weight.size(); ++i) {
        layer.weight.data()[i] *= 20.0 * rng.uniform();
      }
    }
    ++net.version;
    project_rows(net);
    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
      const Layer& layer = net.layers[l];
      for (std::size_t j = 0; j < layer.weight.rows(); ++j) {
        CHECK(l1_norm(layer.weight.row(j), layer.weight.cols()) +
                  std::fabs(layer.bias[j]) <=
              1.0 + 1e-12);
      }
    }
    CHECK(weight_norm(net) <= net.norm_budget + 1e-12);
  }
}

TEST_CASE("project_rows: nets already inside the row caps are untouched") {
  NormNet net;
  net.layers.push_back({Mat::from_rows({{0.5, 0.25}, {0.0, 0.9}}), {0.25, 0.1}});
  net.layers.push_back({Mat::from_rows({{2.0, 1.5}}), {0.7}});
  net.norm_budget = 4.0;
  const NormNet before = net;
  project_rows(net);
  CHECK(net.layers[0].weight == before.layers[0].weight);
  CHECK(net.layers[0].bias == before.layers[0].bias);
  CHECK(net.layers[1].weight == before.layers[1].weight);
  CHECK(net.layers[1].bias == before.layers[1].bias);
}

TEST_CASE("final layer is positively homogeneous") {
  Rng rng(43);
  NormNet net = make_net({3, 5, 2}, 50.0, rng);
  const Mat x = random_mat(4, 3, rng);
  const Mat base = forward(net, x);
  for (std::size_t i = 0; i < net.layers.back().weight.size(); ++i) {
    net.layers.back().weight.data()[i] *= 2.0;
  }
  for (double& b : net.layers.back().bias) b *= 2.0;
  const Mat doubled = forward(net, x);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(doubled.data()[i] == 2.0 * base.data()[i]);
  }
}

TEST_CASE("networks within budget are Lipschitz in the max norm") {
  Rng rng(47);
  for (int t = 0; t < 20; ++t) {
    NormNet net = random_net(rng);
    project_norm(net);
    const double k = net.norm_budget;
    const Mat x = random_mat(1, net.input_dim(), rng, -2.0, 2.0);
    Mat x2 = x;
    for (std::size_t j = 0; j < x2.cols(); ++j) x2(0, j) += rng.uniform(-0.5, 0.5);
    double dx = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      dx = std::max(dx, std::fabs(x(0, j) - x2(0, j)));
    }
    const Mat y1 = forward(net, x), y2 = forward(net, x2);
    double dy = 0.0;
    for (std::size_t j = 0; j < y1.cols(); ++j) {
      dy = std::max(dy, std::fabs(y1(0, j) - y2(0, j)));
    }
    CHECK(dy <= k * dx + 1e-12);
  }
}

TEST_CASE("make_net: biases start at zero and the budget holds") {
  Rng rng(53);
  NormNet net = make_net({4, 8, 8, 2}, 3.0, rng);
  for (const auto& layer : net.layers) {
    for (std::size_t j = 0; j < layer.bias.size(); ++j) CHECK(layer.bias[j] == 0.0);
  }
  CHECK(weight_norm(net) <= 3.0 + 1e-12);
}

TEST_CASE("make_net: identical seeds give bit-identical parameters") {
  Rng a(99), b(99);
  const NormNet na = make_net({3, 6, 2}, 4.0, a);
  const NormNet nb = make_net({3, 6, 2}, 4.0, b);
  for (std::size_t l = 0; l < na.layers.size(); ++l) {
    CHECK(na.layers[l].weight == nb.layers[l].weight);
    CHECK(na.layers[l].bias == nb.layers[l].bias);
  }
}

TEST_CASE("opt_step: zero gradient leaves parameters unchanged") {
  AdamState st(OptimConfig{.learning_rate = 0.1}, 2, 0.0, "p");
  Vec p{0.5, -0.25};
  const Vec g(2, 0.0);
  opt_step(st, p, g);
  CHECK(p[0] == 0.5);
  CHECK(p[1] == -0.25);
}

TEST_CASE("opt_step: proximal shrinkage past the magnitude yields exact zero") {
  AdamState st(OptimConfig{.learning_rate = 0.1}, 1, 7.0, "p");  // shrink = 0.7
  Vec p{0.5};
  opt_step(st, p, Vec{0.0});
  CHECK(p[0] == 0.0);
}

TEST_CASE("opt_step: quadratic bowl loss decreases every step") {
  AdamState st(OptimConfig{.learning_rate = 0.05}, 2, 0.0, "p");
  Vec p{1.0, -2.0};
  double prev = p[0] * p[0] + p[1] * p[1];
  for (int i = 0; i < 10; ++i) {
    const Vec g{2.0 * p[0], 2.0 * p[1]};
    opt_step(st, p, g);
    const double loss = p[0] * p[0] + p[1] * p[1];
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("opt_step: non-finite gradients name the parameter group") {
  AdamState st(OptimConfig{}, 1, 0.0, "heads");
  Vec p{1.0};
  try {
    opt_step(st, p, Vec{std::nan("")});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("heads") != std::string::npos);
  }
}

TEST_CASE("opt_step: soft threshold keeps exact zeros stable") {
  AdamState st(OptimConfig{.learning_rate = 0.01}, 1, 1.0, "p");
  Vec p{0.0};
  opt_step(st, p, Vec{0.0});
  CHECK(p[0] == 0.0);
}

TEST_CASE("training loop determinism: same seed, same parameters bitwise") {
  const auto run = [] {
    Rng rng(7);
    NormNet net = make_net({2, 4, 1}, 5.0, rng);
    NetOptimizer opt(net, OptimConfig{.learning_rate = 0.01}, 0.0, "net");
    const Mat x = random_mat(6, 2, rng);
    for (int step = 0; step < 5; ++step) {
      ForwardCache cache;
      const Mat y = forward(net, x, cache);
      Mat cot(6, 1);
      for (std::size_t i = 0; i < 6; ++i) cot(i, 0) = 2.0 * y(i, 0);
      opt.step(net, backward(net, cache, cot));
    }
    return net;
  };
  const NormNet a = run(), b = run();
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weight == b.layers[l].weight);
    CHECK(a.layers[l].bias == b.layers[l].bias);
  }
}
