#include "rela/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace rela {

Mlp Mlp::init(const std::vector<std::size_t>& sizes, RngStream& rng) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output size");
    Mlp net;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Matrix w(sizes[l + 1], sizes[l]);
        Vector b(sizes[l + 1], 0.0);
        const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
        for (double& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
        for (double& v : b) v = (2.0 * rng.uniform() - 1.0) * bound;
        net.weights_.push_back(std::move(w));
        net.biases_.push_back(std::move(b));
    }
    return net;
}

namespace {

Matrix affine(const Matrix& x, const Matrix& w, const Vector& b) {
    // x: n x in, w: out x in -> n x out
    Matrix out(x.rows(), w.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto xrow = x.row(i);
        auto orow = out.row(i);
        for (std::size_t o = 0; o < w.rows(); ++o) orow[o] = b[o] + dot(w.row(o), xrow);
    }
    return out;
}

}  // namespace

Matrix Mlp::forward(const Matrix& x) const {
    Cache unused;
    return forward(x, unused);
}

Matrix Mlp::forward(const Matrix& x, Cache& cache) const {
    if (x.cols() != input_dim()) throw std::invalid_argument("Mlp::forward: dimension mismatch");
    cache.activations.clear();
    cache.activations.push_back(x);
    Matrix cur = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        cur = affine(cur, weights_[l], biases_[l]);
        if (l + 1 < weights_.size())
            for (double& v : cur.data()) v = v > 0.0 ? v : 0.0;
        cache.activations.push_back(cur);
    }
    return cur;
}

Mlp::Grads Mlp::backward(const Cache& cache, const Matrix& d_out, Matrix* d_input) const {
    const std::size_t layers = weights_.size();
    if (cache.activations.size() != layers + 1)
        throw std::invalid_argument("Mlp::backward: stale cache");
    Grads g;
    g.weights.resize(layers);
    g.biases.resize(layers);

    Matrix delta = d_out;
    for (std::size_t l = layers; l-- > 0;) {
        const Matrix& input = cache.activations[l];
        if (l + 1 < layers) {
            // ReLU mask of this layer's post-activation
            const Matrix& post = cache.activations[l + 1];
            for (std::size_t i = 0; i < delta.size(); ++i)
                if (post.data()[i] <= 0.0) delta.data()[i] = 0.0;
        }
        g.weights[l] = Matrix(weights_[l].rows(), weights_[l].cols());
        g.biases[l].assign(biases_[l].size(), 0.0);
        for (std::size_t i = 0; i < delta.rows(); ++i) {
            const auto drow = delta.row(i);
            const auto xrow = input.row(i);
            for (std::size_t o = 0; o < weights_[l].rows(); ++o) {
                const double d = drow[o];
                if (d == 0.0) continue;
                g.biases[l][o] += d;
                auto wrow = g.weights[l].row(o);
                for (std::size_t c = 0; c < weights_[l].cols(); ++c) wrow[c] += d * xrow[c];
            }
        }
        if (l > 0 || d_input != nullptr) {
            Matrix next(delta.rows(), weights_[l].cols());
            for (std::size_t i = 0; i < delta.rows(); ++i) {
                const auto drow = delta.row(i);
                auto nrow = next.row(i);
                for (std::size_t o = 0; o < weights_[l].rows(); ++o) {
                    const double d = drow[o];
                    if (d == 0.0) continue;
                    const auto wrow = weights_[l].row(o);
                    for (std::size_t c = 0; c < weights_[l].cols(); ++c) nrow[c] += d * wrow[c];
                }
            }
            if (l == 0 && d_input != nullptr) *d_input = next;
            delta = std::move(next);
        }
    }
    return g;
}

void Mlp::Grads::flatten(Vector& out) const {
    out.clear();
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.insert(out.end(), weights[l].data().begin(), weights[l].data().end());
        out.insert(out.end(), biases[l].begin(), biases[l].end());
    }
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
}

void Mlp::to_flat(Vector& out) const {
    out.clear();
    out.reserve(param_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.insert(out.end(), weights_[l].data().begin(), weights_[l].data().end());
        out.insert(out.end(), biases_[l].begin(), biases_[l].end());
    }
}

void Mlp::from_flat(const Vector& flat) {
    if (flat.size() != param_count()) throw std::invalid_argument("Mlp::from_flat: size mismatch");
    std::size_t pos = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        std::copy(flat.begin() + pos, flat.begin() + pos + weights_[l].size(),
                  weights_[l].data().begin());
        pos += weights_[l].size();
        std::copy(flat.begin() + pos, flat.begin() + pos + biases_[l].size(),
                  biases_[l].begin());
        pos += biases_[l].size();
    }
}

void AdamOptimizer::step(Vector& params, const Vector& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw std::invalid_argument("AdamOptimizer: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
        params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
}

void SgdMomentumOptimizer::step(Vector& params, const Vector& grads) {
    if (params.size() != vel_.size() || grads.size() != vel_.size())
        throw std::invalid_argument("SgdMomentumOptimizer: size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        vel_[i] = momentum_ * vel_[i] + grads[i];
        params[i] -= lr_ * vel_[i];
    }
}

}  // namespace rela
