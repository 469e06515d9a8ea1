#include "invarep/dcov.hpp"

#include <array>
#include <cmath>
#include <string>

namespace invarep {
namespace {

void check_pair(const Mat& z, const Mat& y) {
  if (z.rows() != y.rows()) {
    throw ShapeError("dcov: z has " + std::to_string(z.rows()) + " rows, y has " +
                     std::to_string(y.rows()));
  }
  if (z.rows() < 4) {
    throw InsufficientSamplesError("dcov: needs at least 4 samples, got " +
                                   std::to_string(z.rows()));
  }
}

}  // namespace

Mat pairwise_dist(const Mat& m) {
  const std::size_t n = m.rows();
  Mat d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = euclid_dist(m.row(i), m.row(j), m.cols());
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Mat u_center(const Mat& dist) {
  const std::size_t n = dist.rows();
  Vec rowsum(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) rowsum[i] += dist(i, j);
    grand += rowsum[i];
  }
  Mat u(n, n);
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      u(i, j) = i == j ? 0.0
                       : dist(i, j) - (rowsum[i] + rowsum[j]) / (nd - 2.0) +
                             grand / ((nd - 1.0) * (nd - 2.0));
    }
  }
  return u;
}

double dcov_brute(const Mat& z, const Mat& y) {
  check_pair(z, y);
  const std::size_t n = z.rows();
  const Mat a = pairwise_dist(z);
  const Mat b = pairwise_dist(y);

  // Kernel over one quadruple: average the three ways of splitting four
  // indices into pairs, combining the a-distances of one pair with the
  // b-distances of the other.
  double total = 0.0;
  std::size_t count = 0;
  std::array<std::size_t, 4> q{};
  for (q[0] = 0; q[0] < n; ++q[0])
    for (q[1] = q[0] + 1; q[1] < n; ++q[1])
      for (q[2] = q[1] + 1; q[2] < n; ++q[2])
        for (q[3] = q[2] + 1; q[3] < n; ++q[3]) {
          double s_ab = 0.0, s_a = 0.0, s_b = 0.0, s_rr = 0.0;
          for (std::size_t u = 0; u < 4; ++u) {
            double ra = 0.0, rb = 0.0;
            for (std::size_t v = 0; v < 4; ++v) {
              if (u == v) continue;
              const double av = a(q[u], q[v]);
              const double bv = b(q[u], q[v]);
              s_ab += av * bv;
              ra += av;
              rb += bv;
            }
            s_a += ra;
            s_b += rb;
            s_rr += ra * rb;
          }
          total += 0.25 * s_ab + s_a * s_b / 24.0 - 0.25 * s_rr;
          ++count;
        }
  return total / static_cast<double>(count);
}

double dcov_fast(const Mat& z, const Mat& y) {
  check_pair(z, y);
  const std::size_t n = z.rows();
  const Mat a = u_center(pairwise_dist(z));
  const Mat b = u_center(pairwise_dist(y));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  const double nd = static_cast<double>(n);
  return s / (nd * (nd - 3.0));
}

Mat dcov_grad(const Mat& z, const Mat& y) {
  check_pair(z, y);
  const std::size_t n = z.rows(), d = z.cols();
  const Mat b = u_center(pairwise_dist(y));
  const Mat a = pairwise_dist(z);
  const double scale = 2.0 / (static_cast<double>(n) * (static_cast<double>(n) - 3.0));

  // d(dcov)/d(a_pq) = scale * b~_pq because the U-centered matrices have zero
  // row sums; chain through a_pq = |z_p - z_q|.
  Mat g(n, d);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      if (p == q || a(p, q) == 0.0) continue;
      const double w = scale * b(p, q) / a(p, q);
      const double* zp = z.row(p);
      const double* zq = z.row(q);
      double* gp = g.row(p);
      for (std::size_t k = 0; k < d; ++k) gp[k] += w * (zp[k] - zq[k]);
    }
  }
  return g;
}

}  // namespace invarep
