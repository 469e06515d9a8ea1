#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "invarep/transport.hpp"

using namespace invarep;
using testhelp::random_mat;

namespace {

// Independent reference for the matching-based distance: minimises the mean
// Euclidean cost over every one of the n! pairings. Only viable for tiny n,
// which is exactly why it makes a trustworthy oracle.
double w1_all_pairings(const Mat& a, const Mat& b) {
  const std::size_t n = a.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += euclid_dist(a.row(i), b.row(perm[i]), a.cols());
    }
    best = std::min(best, total / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Mat shifted(const Mat& m, const Vec& offset) {
  Mat out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += offset[j];
  }
  return out;
}

// A critic computing budget * x0 on inputs with nonnegative first coordinate:
// relu passes x0 through, the final 1x1 layer scales by the full budget, so
// weight_norm lands exactly on the budget.
NormNet axis_critic(std::size_t dim, double budget) {
  NormNet net;
  net.norm_budget = budget;
  Layer first{Mat(1, dim), Vec(1, 0.0)};
  first.weight(0, 0) = 1.0;
  Layer last{Mat(1, 1), Vec(1, 0.0)};
  last.weight(0, 0) = budget;
  net.layers = {first, last};
  return net;
}

}  // namespace

TEST_CASE("sorted 1-d distance matches hand-built couplings") {
  CHECK(w1_exact_1d({0.0}, {1.0}) == 1.0);
  CHECK(w1_exact_1d({3.0, -1.0, 2.0}, {2.0, 3.0, -1.0}) == 0.0);
  // Sorted pairing (0,1),(2,3) beats the crossed one.
  CHECK(w1_exact_1d({0.0, 2.0}, {3.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w1_exact_1d({0.0, 10.0}, {5.0, 5.0}) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("1-d distance is shift invariant and permutation blind") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rng.below(30);
    Vec a(n), b(n);
    for (auto& v : a) v = rng.uniform(-3.0, 3.0);
    for (auto& v : b) v = rng.uniform(-3.0, 3.0);
    const double base = w1_exact_1d(a, b);
    Vec ap = a, bp = b;
    rng.shuffle(ap);
    rng.shuffle(bp);
    CHECK(w1_exact_1d(ap, bp) == base);
    const double c = rng.uniform(-5.0, 5.0);
    Vec as = a, bs = b;
    for (auto& v : as) v += c;
    for (auto& v : bs) v += c;
    CHECK(w1_exact_1d(as, bs) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("1-d distance rejects mismatched or empty samples") {
  CHECK_THROWS_AS(w1_exact_1d({1.0, 2.0}, {1.0}), ShapeError);
  CHECK_THROWS_AS(w1_exact_1d({}, {}), InsufficientSamplesError);
}

TEST_CASE("matching distance agrees with full pairing enumeration") {
  Rng rng(17);
  for (std::size_t n = 1; n <= 7; ++n) {
    for (std::size_t dim : {1, 2, 3}) {
      for (int rep = 0; rep < 3; ++rep) {
        const Mat a = random_mat(n, dim, rng, -2.0, 2.0);
        const Mat b = random_mat(n, dim, rng, -2.0, 2.0);
        CHECK(w1_exact_matching(a, b) ==
              doctest::Approx(w1_all_pairings(a, b)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("matching distance agrees with the sorted coupling in one dimension") {
  Rng rng(19);
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t n = 4 + rng.below(40);
    const Mat a = random_mat(n, 1, rng, -4.0, 4.0);
    const Mat b = random_mat(n, 1, rng, -4.0, 4.0);
    Vec av(a.data(), a.data() + n), bv(b.data(), b.data() + n);
    CHECK(w1_exact_matching(a, b) == doctest::Approx(w1_exact_1d(av, bv)).epsilon(1e-12));
  }
}

TEST_CASE("matching distance is symmetric, nonnegative and vanishes on permuted rows") {
  Rng rng(23);
  const Mat a = random_mat(20, 3, rng);
  const Mat b = random_mat(20, 3, rng);
  const double ab = w1_exact_matching(a, b);
  CHECK(ab > 0.0);
  CHECK(w1_exact_matching(b, a) == doctest::Approx(ab).epsilon(1e-12));

  std::vector<std::size_t> order(a.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  Mat perm(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) perm(i, j) = a(order[i], j);
  }
  CHECK(w1_exact_matching(a, perm) == 0.0);
}

TEST_CASE("matching distance is invariant under common shifts") {
  Rng rng(29);
  const Mat a = random_mat(16, 2, rng);
  const Mat b = random_mat(16, 2, rng);
  const Vec offset = {rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
  CHECK(w1_exact_matching(shifted(a, offset), shifted(b, offset)) ==
        doctest::Approx(w1_exact_matching(a, b)).epsilon(1e-9));
}

TEST_CASE("matching distance rejects oversized or mismatched inputs") {
  Rng rng(31);
  const Mat big_a = random_mat(65, 2, rng);
  const Mat big_b = random_mat(65, 2, rng);
  CHECK_THROWS_AS(w1_exact_matching(big_a, big_b), SizeError);
  const Mat cap_a = random_mat(64, 2, rng);
  const Mat cap_b = random_mat(64, 2, rng);
  CHECK_NOTHROW(w1_exact_matching(cap_a, cap_b));
  CHECK_THROWS_AS(w1_exact_matching(random_mat(4, 2, rng), random_mat(5, 2, rng)), ShapeError);
  CHECK_THROWS_AS(w1_exact_matching(random_mat(4, 2, rng), random_mat(4, 3, rng)), ShapeError);
  CHECK_THROWS_AS(w1_exact_matching(Mat(0, 2), Mat(0, 2)), InsufficientSamplesError);
}

TEST_CASE("dual estimate requires a feasible scalar critic") {
  Rng rng(37);
  const Mat a = random_mat(8, 3, rng);
  const Mat b = random_mat(8, 3, rng);

  NormNet vector_valued = make_net({3, 8, 2}, 4.0, rng);
  CHECK_THROWS_AS(w1_dual_estimate(vector_valued, a, b), ShapeError);

  NormNet wrong_dim = make_net({2, 8, 1}, 4.0, rng);
  CHECK_THROWS_AS(w1_dual_estimate(wrong_dim, a, b), ShapeError);

  NormNet ok = make_net({3, 8, 1}, 4.0, rng);
  CHECK_THROWS_AS(w1_dual_estimate(ok, Mat(0, 3), b), InsufficientSamplesError);

  NormNet inflated = make_net({3, 8, 1}, 4.0, rng);
  Mat& last = inflated.layers.back().weight;
  for (std::size_t i = 0; i < last.size(); ++i) last.data()[i] *= 50.0;
  CHECK_THROWS_AS(w1_dual_estimate(inflated, a, b), FeasibilityError);
}

TEST_CASE("dual estimate never exceeds the exact distance") {
  Rng rng(41);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t dim = 1 + rng.below(3);
    const std::size_t n = 4 + rng.below(17);
    const Mat a = random_mat(n, dim, rng, -2.0, 2.0);
    const Mat b = random_mat(n, dim, rng, -2.0, 2.0);
    NormNet critic = make_net({dim, 16, 16, 1}, 4.0, rng);
    // Random rescale so some critics sit right at the budget.
    const double scale = rng.uniform(0.5, 40.0);
    Mat& last = critic.layers.back().weight;
    for (std::size_t i = 0; i < last.size(); ++i) last.data()[i] *= scale;
    project_norm(critic);
    const double dual = w1_dual_estimate(critic, a, b);
    const double exact = w1_exact_matching(a, b);
    CHECK(dual <= exact + 1e-12);
    CHECK(w1_dual_estimate(critic, b, a) == -dual);
  }
}

TEST_CASE("dual estimate attains the exact distance for an aligned critic") {
  // Point masses at x0=2 versus x0=1: the optimal transport moves every point
  // a distance of one, and the coordinate projection critic is a maximiser.
  Mat a(8, 3, 0.0), b(8, 3, 0.0);
  for (std::size_t i = 0; i < 8; ++i) {
    a(i, 0) = 2.0;
    b(i, 0) = 1.0;
  }
  const NormNet critic = axis_critic(3, 4.0);
  CHECK(weight_norm(critic) == 4.0);
  CHECK(w1_exact_matching(a, b) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w1_dual_estimate(critic, a, b) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("500 ascent steps reach at least 0.8x the exact 1-d distance") {
  Rng rng(43);
  const std::size_t n = 64;
  Mat a = random_mat(n, 1, rng, 0.0, 1.0);
  Mat b = random_mat(n, 1, rng, 3.0, 4.0);
  Vec av(a.data(), a.data() + n), bv(b.data(), b.data() + n);
  const double exact = w1_exact_1d(av, bv);

  for (std::uint64_t seed : {1, 2, 3}) {
    CriticConfig cfg;
    cfg.ascent_steps = 500;
    Rng net_rng(seed);
    NormNet critic = make_net({1, cfg.width, cfg.width, 1}, cfg.norm_budget, net_rng);
    const double before = w1_dual_estimate(critic, a, b);
    critic = critic_ascent(std::move(critic), a, b, cfg);
    const double after = w1_dual_estimate(critic, a, b);
    CHECK(after > before);
    CHECK(after >= 0.8 * exact);
    CHECK(after <= exact + 1e-12);
  }
}

TEST_CASE("ascent improves the dual estimate on separated 3-d samples") {
  Rng rng(43);
  const std::size_t n = 32;
  Mat a = random_mat(n, 3, rng, 0.0, 1.0);
  Mat b = random_mat(n, 3, rng, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) b(i, 0) += 3.0;
  const double exact = w1_exact_matching(a, b);

  CriticConfig cfg;
  cfg.ascent_steps = 500;
  cfg.learning_rate = 0.01;
  NormNet critic = make_net({3, cfg.width, cfg.width, 1}, cfg.norm_budget, rng);
  const double before = w1_dual_estimate(critic, a, b);
  critic = critic_ascent(std::move(critic), a, b, cfg);
  const double after = w1_dual_estimate(critic, a, b);
  CHECK(after > before);
  CHECK(after >= 0.5 * exact);
  CHECK(after <= exact + 1e-12);
}

TEST_CASE("critic ascent keeps the iterate feasible after every call") {
  Rng rng(47);
  const Mat a = random_mat(24, 2, rng, -1.0, 1.0);
  const Mat b = random_mat(24, 2, rng, 1.0, 3.0);
  CriticConfig cfg;
  cfg.ascent_steps = 5;
  CriticAscender asc(make_net({2, cfg.width, cfg.width, 1}, cfg.norm_budget, rng), cfg);
  for (int round = 0; round < 10; ++round) {
    asc.ascend(a, b);
    CHECK(weight_norm(asc.critic()) <= cfg.norm_budget + 1e-9);
    CHECK_NOTHROW(w1_dual_estimate(asc.critic(), a, b));
  }
}

TEST_CASE("warm-started ascent equals one uninterrupted run") {
  Rng rng_data(53);
  const Mat a = random_mat(16, 3, rng_data, -1.0, 0.0);
  const Mat b = random_mat(16, 3, rng_data, 0.5, 1.5);

  CriticConfig five;
  five.ascent_steps = 5;
  CriticConfig ten = five;
  ten.ascent_steps = 10;

  Rng r1(59), r2(59);
  CriticAscender chunked(make_net({3, 16, 16, 1}, five.norm_budget, r1), five);
  chunked.ascend(a, b);
  chunked.ascend(a, b);
  const NormNet straight = critic_ascent(make_net({3, 16, 16, 1}, ten.norm_budget, r2), a, b, ten);

  REQUIRE(chunked.critic().layers.size() == straight.layers.size());
  for (std::size_t l = 0; l < straight.layers.size(); ++l) {
    CHECK(chunked.critic().layers[l].weight == straight.layers[l].weight);
    CHECK(chunked.critic().layers[l].bias == straight.layers[l].bias);
  }
}

TEST_CASE("ascent is bitwise reproducible for a fixed seed") {
  Rng rng_data(61);
  const Mat a = random_mat(20, 2, rng_data, -2.0, 0.0);
  const Mat b = random_mat(20, 2, rng_data, 0.0, 2.0);
  CriticConfig cfg;
  cfg.ascent_steps = 20;

  double duals[2];
  for (int run = 0; run < 2; ++run) {
    Rng rng(67);
    NormNet critic = critic_ascent(make_net({2, 16, 16, 1}, cfg.norm_budget, rng), a, b, cfg);
    duals[run] = w1_dual_estimate(critic, a, b);
  }
  CHECK(duals[0] == duals[1]);
}

TEST_CASE("uniform reference sampler fills the unit cube reproducibly") {
  Rng rng(71);
  const Mat ref = sample_uniform_ref(2000, 3, rng);
  REQUIRE(ref.rows() == 2000);
  REQUIRE(ref.cols() == 3);
  double lo = 1.0, hi = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    lo = std::min(lo, ref.data()[i]);
    hi = std::max(hi, ref.data()[i]);
    mean += ref.data()[i];
  }
  mean /= static_cast<double>(ref.size());
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
  CHECK(std::fabs(mean - 0.5) < 4.0 / std::sqrt(12.0 * static_cast<double>(ref.size())));

  Rng rng_again(71);
  CHECK(sample_uniform_ref(2000, 3, rng_again) == ref);
}
