#include "rela/pca.hpp"

#include <cmath>
#include <stdexcept>

namespace rela {

namespace {

PcaResult decompose(const Matrix& centered, const Matrix& covariance, std::size_t k,
                    Vector mean, std::optional<Vector> col_std, std::size_t batch_size) {
    const std::size_t d = covariance.rows();
    const EigResult eig = eig_symmetric(covariance);
    PcaResult out;
    out.model.mean = std::move(mean);
    out.model.col_std = std::move(col_std);
    out.model.eigenvalues.assign(eig.eigenvalues.begin(), eig.eigenvalues.begin() + k);
    out.model.components = Matrix(d, k);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < k; ++j) out.model.components(i, j) = eig.eigenvectors(i, j);

    const std::size_t n = centered.rows();
    out.reduced = Matrix(n, k);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(start + batch_size, n);
        for (std::size_t i = start; i < stop; ++i) {
            const auto row = centered.row(i);
            for (std::size_t j = 0; j < k; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += row[c] * out.model.components(c, j);
                out.reduced(i, j) = s;
            }
        }
    }
    return out;
}

Matrix center_columns(const Matrix& y, const Vector& mean) {
    Matrix c = y;
    for (std::size_t i = 0; i < c.rows(); ++i) {
        auto row = c.row(i);
        for (std::size_t j = 0; j < c.cols(); ++j) row[j] -= mean[j];
    }
    return c;
}

void check_input(const Matrix& y, std::size_t k) {
    if (y.rows() < 2) throw std::invalid_argument("pca: need at least 2 rows");
    if (k == 0 || k > y.cols())
        throw std::invalid_argument("pca: k must satisfy 1 <= k <= cols");
}

}  // namespace

PcaResult full_pca(const Matrix& y, std::size_t k) {
    check_input(y, k);
    Vector mean = col_mean(y);
    const Matrix centered = center_columns(y, mean);
    Matrix cov = matmul(transpose(centered), centered);
    const double inv = 1.0 / static_cast<double>(y.rows() - 1);
    for (double& v : cov.data()) v *= inv;
    return decompose(centered, cov, k, std::move(mean), std::nullopt, y.rows());
}

PcaResult batch_pca(const Matrix& y, std::size_t k, std::size_t batch_size) {
    check_input(y, k);
    if (batch_size == 0) throw std::invalid_argument("batch_pca: batch_size must be >= 1");
    Vector mean = col_mean(y);
    const Matrix centered = center_columns(y, mean);

    const std::size_t n = y.rows();
    const std::size_t d = y.cols();
    Matrix cov(d, d);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(start + batch_size, n);
        // cov += B^T B for this batch
        for (std::size_t i = start; i < stop; ++i) {
            const auto row = centered.row(i);
            for (std::size_t a = 0; a < d; ++a) {
                const double ra = row[a];
                if (ra == 0.0) continue;
                auto crow = cov.row(a);
                for (std::size_t b = 0; b < d; ++b) crow[b] += ra * row[b];
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (double& v : cov.data()) v *= inv;
    return decompose(centered, cov, k, std::move(mean), std::nullopt, batch_size);
}

ReduceResult reduce_targets(const Matrix& targets, std::size_t n_components, bool standardize) {
    if (targets.rows() == 0 || targets.cols() == 0)
        throw std::invalid_argument("reduce_targets: empty matrix");
    ReduceResult out;
    if (!standardize) {
        PcaResult r = full_pca(targets, n_components);
        out.model = std::move(r.model);
        out.reduced = std::move(r.reduced);
        return out;
    }

    const Vector mean = col_mean(targets);
    const Vector stds = col_std(targets, 1);
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < targets.cols(); ++j) {
        if (stds[j] > 0.0)
            kept.push_back(j);
        else
            out.dropped_columns.push_back(j);
    }
    if (kept.empty()) throw std::invalid_argument("reduce_targets: all columns have zero variance");
    if (n_components > kept.size())
        throw std::invalid_argument("reduce_targets: n_components exceeds usable columns");

    Matrix z(targets.rows(), kept.size());
    Vector kept_mean(kept.size()), kept_std(kept.size());
    for (std::size_t jj = 0; jj < kept.size(); ++jj) {
        kept_mean[jj] = mean[kept[jj]];
        kept_std[jj] = stds[kept[jj]];
    }
    for (std::size_t i = 0; i < targets.rows(); ++i) {
        const auto row = targets.row(i);
        auto zrow = z.row(i);
        for (std::size_t jj = 0; jj < kept.size(); ++jj)
            zrow[jj] = (row[kept[jj]] - kept_mean[jj]) / kept_std[jj];
    }
    // covariance of the standardized matrix; z is already zero-mean
    Matrix cov = matmul(transpose(z), z);
    const double inv = 1.0 / static_cast<double>(targets.rows() - 1);
    for (double& v : cov.data()) v *= inv;
    PcaResult r = decompose(z, cov, n_components, std::move(kept_mean), kept_std, targets.rows());
    out.model = std::move(r.model);
    out.reduced = std::move(r.reduced);
    return out;
}

Matrix pca_transform(const PcaModel& model, const Matrix& y) {
    if (y.cols() != model.mean.size())
        throw std::invalid_argument("pca_transform: column count mismatch");
    const std::size_t k = model.eigenvalues.size();
    Matrix out(y.rows(), k);
    Vector centered(y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
        const auto row = y.row(i);
        for (std::size_t j = 0; j < y.cols(); ++j) {
            centered[j] = row[j] - model.mean[j];
            if (model.col_std) centered[j] /= (*model.col_std)[j];
        }
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) s += centered[c] * model.components(c, j);
            out(i, j) = s;
        }
    }
    return out;
}

}  // namespace rela
