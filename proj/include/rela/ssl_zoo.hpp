#pragma once

#include <optional>
#include <span>
#include <string>

#include "rela/core_math.hpp"

namespace rela {

/// Online/target embedding views plus an optional negative bank.
struct EmbeddingBatch {
    Matrix u1;  // N x c, online branch
    Matrix u2;  // N x c, target branch (treated as constants)
    std::optional<Matrix> bank;  // M x c extra negatives

    void validate() const;
};

enum class SslMethod { infonce, byol, simsiam, barlow };

struct SslConfig {
    SslMethod method = SslMethod::byol;
    double temperature = 0.2;
    double barlow_weight = 5e-3;
    double ema_momentum = 0.99;

    void validate() const;
};

SslMethod ssl_method_from_string(const std::string& name);
std::string to_string(SslMethod method);

/// Mean over anchors of -log( exp(cos(u1,u2)/tau) / sum_v exp(cos(u1,v)/tau) ).
/// The candidate set per anchor is the in-batch target rows, or the positive
/// plus the bank when a bank is present. Target rows carry no gradient.
double infonce_loss(const EmbeddingBatch& batch, double tau);

/// Analytic gradient of infonce_loss w.r.t. u1, including the chain rule
/// through the row normalization inside the cosine.
Matrix infonce_grad(const EmbeddingBatch& batch, double tau);

/// Mean of -cos(W u + b, target row); target rows are constants.
double byol_loss(const Matrix& online, const Matrix& target, const Matrix& predictor_w,
                 const Vector& predictor_b);

struct ByolGrads {
    Matrix d_online;
    Matrix d_predictor_w;
    Vector d_predictor_b;
};

ByolGrads byol_grad(const Matrix& online, const Matrix& target, const Matrix& predictor_w,
                    const Vector& predictor_b);

/// Cross-correlation redundancy loss on per-column z-scored embeddings:
/// sum_i (W_ii - 1)^2 + lambda * sum_{i != j} W_ij^2, W = Z1n^T Z2n / N.
double barlow_loss(const Matrix& z1, const Matrix& z2, double lambda_bt);

/// Analytic gradient of barlow_loss w.r.t. z1 (z2 held constant), chained
/// through the internal column normalization.
Matrix barlow_grad(const Matrix& z1, const Matrix& z2, double lambda_bt);

/// target <- m * target + (1 - m) * online, elementwise.
void ema_update(std::span<double> target, std::span<const double> online, double m);

}  // namespace rela
