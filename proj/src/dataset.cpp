#include "invarep/dataset.hpp"

#include <algorithm>
#include <numeric>

namespace invarep {

std::size_t count_domains(const MultiDomainDataset& d) {
  int mx = 0;
  for (int s : d.domain) mx = std::max(mx, s);
  return static_cast<std::size_t>(mx);
}

Mat domain_onehot(const std::vector<int>& domain, std::size_t domains) {
  Mat m(domain.size(), domains);
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (domain[i] < 1 || static_cast<std::size_t>(domain[i]) > domains) {
      throw ShapeError("domain id " + std::to_string(domain[i]) + " outside 1.." +
                       std::to_string(domains));
    }
    m(i, static_cast<std::size_t>(domain[i] - 1)) = 1.0;
  }
  return m;
}

MultiDomainDataset subset(const MultiDomainDataset& d, const std::vector<std::size_t>& idx) {
  MultiDomainDataset out;
  out.x = Mat(idx.size(), d.x.cols());
  out.y.reserve(idx.size());
  out.domain.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    std::copy(d.x.row(i), d.x.row(i) + d.x.cols(), out.x.row(k));
    out.y.push_back(d.y[i]);
    out.domain.push_back(d.domain[i]);
  }
  return out;
}

std::pair<MultiDomainDataset, MultiDomainDataset> split_frac(const MultiDomainDataset& d,
                                                             double fraction, Rng& rng) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const auto cut = static_cast<std::size_t>(fraction * static_cast<double>(d.size()));
  std::vector<std::size_t> front(order.begin(), order.begin() + cut);
  std::vector<std::size_t> back(order.begin() + cut, order.end());
  return {subset(d, front), subset(d, back)};
}

}  // namespace invarep
