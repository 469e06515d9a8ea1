#pragma once

#include "invarep/common.hpp"

namespace invarep {

// Unbiased distance-covariance U-statistic between the rows of z and y.
// Both overloads require matching row counts and at least 4 rows
// (InsufficientSamplesError below that, ShapeError on mismatch).
//
// dcov_brute enumerates all sample quadruples and is O(n^4); it exists as the
// reference the fast form is tested against. dcov_fast evaluates the same
// statistic in O(n^2) through U-centered distance matrices.
double dcov_brute(const Mat& z, const Mat& y);
double dcov_fast(const Mat& z, const Mat& y);

// Gradient of dcov_fast with respect to the rows of z (same shape as z).
// Coincident rows contribute a zero subgradient.
Mat dcov_grad(const Mat& z, const Mat& y);

// Pairwise Euclidean distance matrix of the rows of m.
Mat pairwise_dist(const Mat& m);

// U-centering: u_ij = d_ij - (r_i + r_j)/(n-2) + g/((n-1)(n-2)) off the
// diagonal, zero on it, where r_i are row sums and g the grand sum.
Mat u_center(const Mat& dist);

}  // namespace invarep
