#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace rela {

using Vector = std::vector<double>;

/// Dense row-major matrix of 64-bit reals. The universal carrier for
/// samples, targets, parameters and covariances in this library.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Vector matvec(const Matrix& a, const Vector& x);

Vector col_mean(const Matrix& a);
/// Column standard deviations with divisor (n - ddof).
Vector col_std(const Matrix& a, std::size_t ddof = 1);

double max_abs(const Matrix& a);
double frobenius_norm(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Deterministic seeded random stream (xoshiro256++ seeded through
/// splitmix64). Identical (seed, stream) always reproduces the same
/// sequence; distinct stream ids derived from one seed are independent.
/// Single-owner: one stream per worker.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in (0, 1).
    double uniform_open();
    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform_int(std::uint64_t bound);
    /// Standard normal draw (Box-Muller, pair-cached).
    double normal();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    /// Independent stream derived from (seed, id).
    RngStream substream(std::uint64_t id) const { return RngStream(seed_, id); }

private:
    std::uint64_t state_[4];
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

/// n i.i.d. draws from N(mean, std^2). std must be >= 0.
Vector sample_gaussian(RngStream& rng, double mean, double std, std::size_t n);

/// n i.i.d. draws with density (beta / (2 alpha Gamma(1/beta))) *
/// exp(-(|x-mu|/alpha)^beta), sampled exactly through the Gamma(1/beta)
/// representation of |x-mu|^beta / alpha^beta via inverse CDF.
Vector sample_generalized_gaussian(RngStream& rng, double mu, double alpha, double beta,
                                   std::size_t n);

/// Variance of the generalized Gaussian: alpha^2 Gamma(3/beta) / Gamma(1/beta).
double generalized_gaussian_variance(double alpha, double beta);

/// Standard normal CDF, Phi(z) = (1/2)(1 + erf(z / sqrt(2))).
double std_normal_cdf(double z);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);
/// Inverse of P(a, .) at probability p in [0, 1).
double inverse_regularized_gamma_p(double a, double p);

struct EigResult {
    Vector eigenvalues;   // descending
    Matrix eigenvectors;  // column-orthonormal, column i pairs with eigenvalues[i]
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations. The input must
/// be square and symmetric within tol (relative to its max-abs entry).
/// Eigenvector sign is fixed so each column's largest-magnitude entry is
/// positive.
EigResult eig_symmetric(const Matrix& a, double tol = 1e-9);

/// Solves (A + ridge I) X = B for symmetric positive definite A (Cholesky).
Matrix cholesky_solve(const Matrix& a, const Matrix& b, double ridge = 0.0);

/// Runs fn(i) for i in [0, n) over at most `threads` workers. Results must
/// be written to index-addressed slots; the schedule never affects output.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace rela
