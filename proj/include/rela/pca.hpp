#pragma once

#include <optional>
#include <vector>

#include "rela/core_math.hpp"

namespace rela {

struct PcaModel {
    Vector mean;                     // d
    std::optional<Vector> col_std;   // d, present only on the standardized path
    Matrix components;               // d x k, column-orthonormal
    Vector eigenvalues;              // k, descending
};

struct PcaResult {
    PcaModel model;
    Matrix reduced;  // n x k
};

/// Single-pass PCA: center by column mean, C = Yc^T Yc / (n-1), keep the
/// top-k eigenpairs, reduced = Yc V_k. Requires n >= 2 and k <= d.
PcaResult full_pca(const Matrix& y, std::size_t k);

/// Same decomposition with the covariance accumulated as per-batch B^T B
/// sums (merged in index order) and the projection applied batch-wise.
/// Agrees with full_pca exactly up to floating-point roundoff.
PcaResult batch_pca(const Matrix& y, std::size_t k, std::size_t batch_size);

struct ReduceResult {
    PcaModel model;
    Matrix reduced;                          // n x n_components
    std::vector<std::size_t> dropped_columns;  // zero-variance columns removed
};

/// Target-matrix dimensionality reduction. Default path centers only
/// (matching the batch-PCA algorithm); with standardize set, columns are
/// z-scored first and the covariance is taken of the standardized matrix.
/// Zero-variance columns are dropped (reported in the result) rather than
/// divided by zero.
ReduceResult reduce_targets(const Matrix& targets, std::size_t n_components, bool standardize);

/// Applies a fitted model to new rows (center, optionally scale, project).
Matrix pca_transform(const PcaModel& model, const Matrix& y);

}  // namespace rela
