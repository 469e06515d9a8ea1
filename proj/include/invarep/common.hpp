#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace invarep {

// Error taxonomy. Every failure mode surfaced by the library maps onto one of
// these so callers (and the CLI) can report the stage and kind uniformly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct CacheError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct InsufficientSamplesError : Error {
  using Error::Error;
};
struct FeasibilityError : Error {
  using Error::Error;
};
struct SizeError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct SchemaError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// Dense row-major matrix. Deliberately minimal: the models here are small
// enough that hand-rolled loops beat pulling in a linear-algebra dependency.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return a_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }
  double* row(std::size_t i) { return a_.data() + i * cols_; }
  const double* row(std::size_t i) const { return a_.data() + i * cols_; }

  bool operator==(const Mat& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> a_;
};

using Vec = std::vector<double>;

// Deterministic RNG. Uniform doubles are derived from the top 53 bits of the
// mt19937_64 stream rather than std::uniform_real_distribution, whose output
// is implementation-defined; this keeps every stream reproducible bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection-sampled so the result is exact and
  // stream-stable for any n.
  std::uint64_t below(std::uint64_t n);

  // Derives an independent child stream; used to give each run stage its own
  // seed without coupling draw counts across stages.
  Rng split();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

double dot(const double* a, const double* b, std::size_t n);
double l1_norm(const double* a, std::size_t n);
double l2_norm(const double* a, std::size_t n);
double sq_dist(const double* a, const double* b, std::size_t n);

// 17 significant digits, enough to parse back to the same bits; every CSV
// the library writes goes through this so round trips are exact.
std::string format_double(double v);

inline double euclid_dist(const double* a, const double* b, std::size_t n) {
  return std::sqrt(sq_dist(a, b, n));
}

}  // namespace invarep
