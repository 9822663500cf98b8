#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "voxsyn/tensor.hpp"

// Set-level generative metrics with pinned estimator conventions:
//  - FID: Frechet distance between Gaussians fit with unbiased covariance;
//    matrix square root by eigendecomposition of the symmetrized product,
//    eps*I regularization retry on failure.
//  - KID: unbiased MMD^2 with the polynomial kernel k(x,y) = (x'y/F + 1)^3,
//    mean/std over seeded subset draws (population std). Equal-sized sets use
//    the paired U-statistic (same-position cross pairs excluded), so
//    identical sets score exactly zero.
//  - IS: exp of the mean KL between row distributions and the fold marginal,
//    mean/std over contiguous folds.

namespace voxsyn::metrics {

struct FeatureSet {
    Eigen::MatrixXd features;  // (n, F)
    std::string extractor_id;

    Index count() const { return features.rows(); }
    Index dim() const { return features.cols(); }
};

double fid(const FeatureSet& a, const FeatureSet& b);

struct KidResult {
    double mean = 0.0;
    double stddev = 0.0;
    int subsets = 0;
    Index subset_size = 0;
};

KidResult kid(const FeatureSet& a, const FeatureSet& b, int subsets, Index subset_size,
              std::uint64_t seed);

// Brute-force unbiased MMD^2 over the full sets (the oracle route for KID).
double mmd2_unbiased(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct IsResult {
    double mean = 0.0;
    double stddev = 0.0;
    int folds = 0;
};

IsResult inception_score(const Eigen::MatrixXd& probs, int folds = 10);

}  // namespace voxsyn::metrics
