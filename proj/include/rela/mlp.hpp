#pragma once

#include <vector>

#include "rela/core_math.hpp"

namespace rela {

/// Fully connected ReLU network with a linear output layer. Rows of the
/// input matrix are samples.
class Mlp {
public:
    Mlp() = default;

    /// sizes = {input, hidden..., output}; uniform(-1/sqrt(fan_in), ..) init.
    static Mlp init(const std::vector<std::size_t>& sizes, RngStream& rng);

    std::size_t input_dim() const { return weights_.front().cols(); }
    std::size_t output_dim() const { return weights_.back().rows(); }
    std::size_t layer_count() const { return weights_.size(); }

    struct Cache {
        std::vector<Matrix> activations;  // [0] = input, then post-activation per layer
    };

    Matrix forward(const Matrix& x) const;
    Matrix forward(const Matrix& x, Cache& cache) const;

    struct Grads {
        std::vector<Matrix> weights;
        std::vector<Vector> biases;
        void flatten(Vector& out) const;
    };

    /// Backprop of d_loss/d_output; optionally also fills d_loss/d_input.
    Grads backward(const Cache& cache, const Matrix& d_out, Matrix* d_input = nullptr) const;

    std::size_t param_count() const;
    void to_flat(Vector& out) const;
    void from_flat(const Vector& flat);

    const std::vector<Matrix>& weights() const { return weights_; }
    const std::vector<Vector>& biases() const { return biases_; }

private:
    std::vector<Matrix> weights_;  // layer l: out x in
    std::vector<Vector> biases_;
};

/// Elementwise adaptive-moment optimizer over a flat parameter vector.
class AdamOptimizer {
public:
    explicit AdamOptimizer(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

    void step(Vector& params, const Vector& grads);

private:
    double lr_, beta1_, beta2_, eps_;
    Vector m_, v_;
    std::size_t t_ = 0;
};

class SgdMomentumOptimizer {
public:
    explicit SgdMomentumOptimizer(std::size_t n, double lr, double momentum)
        : lr_(lr), momentum_(momentum), vel_(n, 0.0) {}

    void step(Vector& params, const Vector& grads);

private:
    double lr_, momentum_;
    Vector vel_;
};

}  // namespace rela
