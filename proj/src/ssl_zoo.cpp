#include "rela/ssl_zoo.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rela {

void EmbeddingBatch::validate() const {
    if (u1.rows() != u2.rows() || u1.cols() != u2.cols())
        throw std::invalid_argument("EmbeddingBatch: u1 and u2 shapes differ");
    if (u1.rows() == 0) throw std::invalid_argument("EmbeddingBatch: empty batch");
    if (bank && bank->cols() != u1.cols())
        throw std::invalid_argument("EmbeddingBatch: bank width mismatch");
    if (!u1.all_finite() || !u2.all_finite() || (bank && !bank->all_finite()))
        throw std::invalid_argument("EmbeddingBatch: non-finite entries");
}

void SslConfig::validate() const {
    if (!(temperature > 0.0)) throw std::invalid_argument("SslConfig: temperature must be > 0");
    if (!(barlow_weight > 0.0)) throw std::invalid_argument("SslConfig: barlow_weight must be > 0");
    if (ema_momentum < 0.0 || ema_momentum >= 1.0)
        throw std::invalid_argument("SslConfig: ema_momentum must be in [0, 1)");
}

SslMethod ssl_method_from_string(const std::string& name) {
    if (name == "infonce") return SslMethod::infonce;
    if (name == "byol") return SslMethod::byol;
    if (name == "simsiam") return SslMethod::simsiam;
    if (name == "barlow") return SslMethod::barlow;
    throw std::invalid_argument("unknown ssl method: " + name);
}

std::string to_string(SslMethod method) {
    switch (method) {
        case SslMethod::infonce: return "infonce";
        case SslMethod::byol: return "byol";
        case SslMethod::simsiam: return "simsiam";
        case SslMethod::barlow: return "barlow";
    }
    return "?";
}

namespace {

Matrix normalize_rows(const Matrix& m, const char* who) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double n = norm2(m.row(i));
        if (!(n > 0.0))
            throw std::invalid_argument(std::string(who) + ": zero-norm embedding row");
        auto row = out.row(i);
        for (double& v : row) v /= n;
    }
    return out;
}

}  // namespace

double infonce_loss(const EmbeddingBatch& batch, double tau) {
    batch.validate();
    if (!(tau > 0.0)) throw std::invalid_argument("infonce_loss: tau must be > 0");
    if (!batch.bank && batch.u1.rows() < 2)
        throw std::invalid_argument("infonce_loss: no negatives available");
    const Matrix a = normalize_rows(batch.u1, "infonce_loss");
    const Matrix t = normalize_rows(batch.u2, "infonce_loss");
    std::optional<Matrix> bank;
    if (batch.bank) bank = normalize_rows(*batch.bank, "infonce_loss");

    const std::size_t n = a.rows();
    double total = 0.0;
    std::vector<double> logits;
    for (std::size_t i = 0; i < n; ++i) {
        logits.clear();
        const double pos = dot(a.row(i), t.row(i)) / tau;
        if (bank) {
            logits.push_back(pos);
            for (std::size_t j = 0; j < bank->rows(); ++j)
                logits.push_back(dot(a.row(i), bank->row(j)) / tau);
        } else {
            for (std::size_t j = 0; j < n; ++j) logits.push_back(dot(a.row(i), t.row(j)) / tau);
        }
        double peak = logits[0];
        for (double v : logits) peak = std::max(peak, v);
        double denom = 0.0;
        for (double v : logits) denom += std::exp(v - peak);
        total += -(pos - (peak + std::log(denom)));
    }
    return total / static_cast<double>(n);
}

Matrix infonce_grad(const EmbeddingBatch& batch, double tau) {
    batch.validate();
    if (!(tau > 0.0)) throw std::invalid_argument("infonce_grad: tau must be > 0");
    if (!batch.bank && batch.u1.rows() < 2)
        throw std::invalid_argument("infonce_grad: no negatives available");
    const Matrix a = normalize_rows(batch.u1, "infonce_grad");
    const Matrix t = normalize_rows(batch.u2, "infonce_grad");
    std::optional<Matrix> bank;
    if (batch.bank) bank = normalize_rows(*batch.bank, "infonce_grad");

    const std::size_t n = a.rows();
    const std::size_t c = a.cols();
    Matrix grad(n, c);
    std::vector<double> logits;
    Vector dhat(c);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t m = bank ? bank->rows() + 1 : n;
        logits.resize(m);
        if (bank) {
            logits[0] = dot(a.row(i), t.row(i)) / tau;
            for (std::size_t j = 0; j < bank->rows(); ++j)
                logits[j + 1] = dot(a.row(i), bank->row(j)) / tau;
        } else {
            for (std::size_t j = 0; j < n; ++j) logits[j] = dot(a.row(i), t.row(j)) / tau;
        }
        double peak = logits[0];
        for (double v : logits) peak = std::max(peak, v);
        double denom = 0.0;
        for (double& v : logits) {
            v = std::exp(v - peak);
            denom += v;
        }
        // d/d(a_hat) = (1/tau) (sum_v s_v v_hat - positive_hat)
        std::fill(dhat.begin(), dhat.end(), 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double s = logits[j] / denom;
            const auto v = bank ? (j == 0 ? t.row(i) : bank->row(j - 1)) : t.row(j);
            for (std::size_t k = 0; k < c; ++k) dhat[k] += s * v[k];
        }
        const auto pos = t.row(i);
        for (std::size_t k = 0; k < c; ++k) dhat[k] = (dhat[k] - pos[k]) / tau;
        // chain through row normalization: (I - a a^T) / |u1| applied to dhat
        const double raw_norm = norm2(batch.u1.row(i));
        const double along = dot(std::span<const double>(dhat), a.row(i));
        auto grow = grad.row(i);
        const auto ahat = a.row(i);
        for (std::size_t k = 0; k < c; ++k)
            grow[k] = (dhat[k] - along * ahat[k]) / raw_norm / static_cast<double>(n);
    }
    return grad;
}

double byol_loss(const Matrix& online, const Matrix& target, const Matrix& predictor_w,
                 const Vector& predictor_b) {
    if (online.rows() != target.rows())
        throw std::invalid_argument("byol_loss: row count mismatch");
    if (predictor_w.cols() != online.cols() || predictor_w.rows() != target.cols() ||
        predictor_b.size() != predictor_w.rows())
        throw std::invalid_argument("byol_loss: predictor shape mismatch");
    const std::size_t n = online.rows();
    double total = 0.0;
    Vector p(predictor_w.rows());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < predictor_w.rows(); ++o)
            p[o] = predictor_b[o] + dot(predictor_w.row(o), online.row(i));
        const double pn = norm2(p);
        const double tn = norm2(target.row(i));
        if (!(pn > 0.0) || !(tn > 0.0))
            throw std::invalid_argument("byol_loss: zero-norm embedding row");
        total += -dot(std::span<const double>(p), target.row(i)) / (pn * tn);
    }
    return total / static_cast<double>(n);
}

ByolGrads byol_grad(const Matrix& online, const Matrix& target, const Matrix& predictor_w,
                    const Vector& predictor_b) {
    const std::size_t n = online.rows();
    const std::size_t c_in = online.cols();
    const std::size_t c_out = predictor_w.rows();
    if (online.rows() != target.rows())
        throw std::invalid_argument("byol_grad: row count mismatch");
    if (predictor_w.cols() != c_in || target.cols() != c_out || predictor_b.size() != c_out)
        throw std::invalid_argument("byol_grad: predictor shape mismatch");

    ByolGrads g;
    g.d_online = Matrix(n, c_in);
    g.d_predictor_w = Matrix(c_out, c_in);
    g.d_predictor_b.assign(c_out, 0.0);

    Vector p(c_out), dp(c_out);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < c_out; ++o)
            p[o] = predictor_b[o] + dot(predictor_w.row(o), online.row(i));
        const double pn = norm2(p);
        const double tn = norm2(target.row(i));
        if (!(pn > 0.0) || !(tn > 0.0))
            throw std::invalid_argument("byol_grad: zero-norm embedding row");
        const auto t = target.row(i);
        double cosv = 0.0;
        for (std::size_t o = 0; o < c_out; ++o) cosv += p[o] / pn * t[o] / tn;
        // d(-cos)/dp = -(t_hat - cos * p_hat) / |p|
        for (std::size_t o = 0; o < c_out; ++o)
            dp[o] = -(t[o] / tn - cosv * p[o] / pn) / pn * inv_n;
        for (std::size_t o = 0; o < c_out; ++o) {
            g.d_predictor_b[o] += dp[o];
            auto wrow = g.d_predictor_w.row(o);
            const auto x = online.row(i);
            for (std::size_t k = 0; k < c_in; ++k) wrow[k] += dp[o] * x[k];
        }
        auto orow = g.d_online.row(i);
        for (std::size_t o = 0; o < c_out; ++o) {
            const auto wrow = predictor_w.row(o);
            for (std::size_t k = 0; k < c_in; ++k) orow[k] += dp[o] * wrow[k];
        }
    }
    return g;
}

namespace {

struct ColumnNorm {
    Matrix z;      // normalized
    Vector mean;
    Vector std;    // population (divisor N)
};

ColumnNorm column_normalize(const Matrix& m, const char* who) {
    if (m.rows() < 2) throw std::invalid_argument(std::string(who) + ": need N >= 2");
    ColumnNorm out;
    out.mean = col_mean(m);
    out.std.assign(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double d = row[j] - out.mean[j];
            out.std[j] += d * d;
        }
    }
    for (double& v : out.std) v = std::sqrt(v / static_cast<double>(m.rows()));
    for (std::size_t j = 0; j < m.cols(); ++j)
        if (!(out.std[j] > 0.0))
            throw std::invalid_argument(std::string(who) + ": zero-variance column");
    out.z = Matrix(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto row = m.row(i);
        auto zrow = out.z.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) zrow[j] = (row[j] - out.mean[j]) / out.std[j];
    }
    return out;
}

Matrix cross_correlation(const Matrix& z1, const Matrix& z2) {
    Matrix w(z1.cols(), z2.cols());
    for (std::size_t b = 0; b < z1.rows(); ++b) {
        const auto r1 = z1.row(b);
        const auto r2 = z2.row(b);
        for (std::size_t i = 0; i < z1.cols(); ++i) {
            if (r1[i] == 0.0) continue;
            auto wrow = w.row(i);
            for (std::size_t j = 0; j < z2.cols(); ++j) wrow[j] += r1[i] * r2[j];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(z1.rows());
    for (double& v : w.data()) v *= inv_n;
    return w;
}

}  // namespace

double barlow_loss(const Matrix& z1, const Matrix& z2, double lambda_bt) {
    if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
        throw std::invalid_argument("barlow_loss: shape mismatch");
    const ColumnNorm n1 = column_normalize(z1, "barlow_loss");
    const ColumnNorm n2 = column_normalize(z2, "barlow_loss");
    const Matrix w = cross_correlation(n1.z, n2.z);
    double loss = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            if (i == j) {
                const double d = w(i, j) - 1.0;
                loss += d * d;
            } else {
                loss += lambda_bt * w(i, j) * w(i, j);
            }
        }
    }
    return loss;
}

Matrix barlow_grad(const Matrix& z1, const Matrix& z2, double lambda_bt) {
    if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
        throw std::invalid_argument("barlow_grad: shape mismatch");
    const ColumnNorm n1 = column_normalize(z1, "barlow_grad");
    const ColumnNorm n2 = column_normalize(z2, "barlow_grad");
    const Matrix w = cross_correlation(n1.z, n2.z);
    const std::size_t n = z1.rows();
    const std::size_t c = z1.cols();

    Matrix dw(c, c);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j)
            dw(i, j) = i == j ? 2.0 * (w(i, j) - 1.0) : 2.0 * lambda_bt * w(i, j);

    // dL/dZ1n = Z2n dW^T / N
    Matrix dz(n, c);
    for (std::size_t b = 0; b < n; ++b) {
        const auto r2 = n2.z.row(b);
        auto drow = dz.row(b);
        for (std::size_t i = 0; i < c; ++i) {
            double s = 0.0;
            const auto dwrow = dw.row(i);
            for (std::size_t j = 0; j < c; ++j) s += dwrow[j] * r2[j];
            drow[i] = s / static_cast<double>(n);
        }
    }
    // backprop the per-column z-scoring (population std)
    Matrix grad(n, c);
    for (std::size_t j = 0; j < c; ++j) {
        double g_mean = 0.0;
        double gz_mean = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            g_mean += dz(b, j);
            gz_mean += dz(b, j) * n1.z(b, j);
        }
        g_mean /= static_cast<double>(n);
        gz_mean /= static_cast<double>(n);
        for (std::size_t b = 0; b < n; ++b)
            grad(b, j) = (dz(b, j) - g_mean - n1.z(b, j) * gz_mean) / n1.std[j];
    }
    return grad;
}

void ema_update(std::span<double> target, std::span<const double> online, double m) {
    if (target.size() != online.size()) throw std::invalid_argument("ema_update: size mismatch");
    if (m < 0.0 || m >= 1.0) throw std::invalid_argument("ema_update: m must be in [0, 1)");
    for (std::size_t i = 0; i < target.size(); ++i)
        target[i] = m * target[i] + (1.0 - m) * online[i];
}

}  // namespace rela
