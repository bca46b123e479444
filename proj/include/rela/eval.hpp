#pragma once

#include <cstdint>
#include <functional>

#include "rela/core_math.hpp"

namespace rela {

struct ProbeConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    double learning_rate = 3e-4;
    double train_fraction = 0.8;

    void validate() const;
};

/// Trains one affine layer with softmax cross-entropy on a seed-shuffled
/// 80/20 split of (features, class labels); returns held-out accuracy.
/// Requires at least two distinct classes.
double linear_probe(const Matrix& features, const std::vector<int>& labels,
                    const ProbeConfig& cfg, RngStream& rng);

using FeatureMap = std::function<Matrix(const Matrix&)>;

struct DistanceConfig {
    double train_fraction = 0.8;
    double mismatch_threshold = 0.05;  // relative euclidean error counted as a miss
    double ridge_scale = 1e-6;         // lambda = scale * trace / dim
    bool categorical = false;          // argmax comparison instead of thresholding
    std::uint64_t seed = 0;
};

struct DistanceEstimate {
    double value = 0.0;  // held-out mismatch rate, an upper bound on the infimum
    double ridge_lambda = 0.0;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::uint64_t seed = 0;
};

/// Best-affine-transport discrepancy between two feature maps over samples:
/// ridge least squares on a train split, mismatch rate on the held-out
/// split. Vector-valued targets count a row as mismatched when the relative
/// euclidean error exceeds the configured threshold; categorical targets
/// compare argmax. Requires at least 10 samples per source feature.
DistanceEstimate rep_distance(const FeatureMap& phi_s, const FeatureMap& phi_t, const Matrix& x,
                              const DistanceConfig& cfg = {});

/// Same estimator on precomputed feature matrices.
DistanceEstimate rep_distance_features(const Matrix& f_s, const Matrix& f_t,
                                       const DistanceConfig& cfg = {});

/// Total variation distance between N(mu1, sigma1^2) and N(mu2, sigma2^2):
/// the equal-variance closed form 2 Phi(|mu1-mu2| / (2 sigma)) - 1, or
/// adaptive quadrature of (1/2) int |p - q| for unequal variances.
double tv_gaussian_1d(double mu1, double sigma1, double mu2, double sigma2);

}  // namespace rela
