#pragma once

#include "invarep/common.hpp"

namespace invarep {

// Labeled sample with a domain id per row. Upstream data uses ids 1..p;
// downstream data carries a single pseudo-domain 0.
struct MultiDomainDataset {
  Mat x;                    // n x d features
  Vec y;                    // n labels (classification stores 0/1)
  std::vector<int> domain;  // n domain ids

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }

  bool operator==(const MultiDomainDataset& o) const = default;
};

// Number of distinct upstream domains (max id).
std::size_t count_domains(const MultiDomainDataset& d);

// Rows of onehot(domain - 1), the domain embedding the dependence penalty
// sees: distinct domains sit at Euclidean distance sqrt(2), equal at 0.
Mat domain_onehot(const std::vector<int>& domain, std::size_t domains);

// Row subset in the given order.
MultiDomainDataset subset(const MultiDomainDataset& d, const std::vector<std::size_t>& idx);

// Deterministic front/back split after a seeded shuffle; fraction is the
// front share (e.g. 0.8 for the training side).
std::pair<MultiDomainDataset, MultiDomainDataset> split_frac(const MultiDomainDataset& d,
                                                             double fraction, Rng& rng);

}  // namespace invarep
