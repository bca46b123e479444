#include "rela/rela_train.hpp"

#include <cmath>
#include <stdexcept>

namespace rela {

RelaState scheduler_step(RelaState state, double ell_c) {
    if (!std::isfinite(ell_c)) throw std::invalid_argument("scheduler_step: non-finite loss");
    state.step += 1;
    if (state.lambda == 1) {
        state.ell_f = 0.999 * state.ell_f + 0.001 * ell_c;
        state.ell_s = 0.99 * state.ell_s + 0.01 * state.ell_f;
    }
    if (std::exp(-std::max(state.ell_s - state.ell_f, 0.0)) >= 0.995) state.lambda = 0;
    return state;
}

double rela_loss(const Vector& z, const Matrix& w, const Vector& b, const Vector& y) {
    if (w.cols() != z.size() || w.rows() != b.size() || y.size() != b.size())
        throw std::invalid_argument("rela_loss: shape mismatch");
    Vector p = matvec(w, z);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += b[i];
    const double pn = norm2(p);
    const double yn = norm2(y);
    if (!(pn > 0.0) || !(yn > 0.0))
        throw std::invalid_argument("rela_loss: zero-norm operand");
    return 1.0 - dot(p, y) / (pn * yn);
}

RelaLossGrads rela_loss_batch(const Matrix& z, const Matrix& w, const Vector& b,
                              const Matrix& y) {
    const std::size_t n = z.rows();
    if (y.rows() != n) throw std::invalid_argument("rela_loss_batch: row mismatch");
    if (w.cols() != z.cols() || w.rows() != b.size() || y.cols() != b.size())
        throw std::invalid_argument("rela_loss_batch: shape mismatch");
    const std::size_t m = w.rows();
    const std::size_t c = w.cols();

    RelaLossGrads out;
    out.d_z = Matrix(n, c);
    out.d_w = Matrix(m, c);
    out.d_b.assign(m, 0.0);

    Vector p(m), dp(m);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto zrow = z.row(i);
        for (std::size_t o = 0; o < m; ++o) p[o] = b[o] + dot(w.row(o), zrow);
        const double pn = norm2(p);
        const double yn = norm2(y.row(i));
        if (!(pn > 0.0) || !(yn > 0.0))
            throw std::invalid_argument("rela_loss_batch: zero-norm operand");
        const auto yrow = y.row(i);
        double cosv = 0.0;
        for (std::size_t o = 0; o < m; ++o) cosv += p[o] / pn * yrow[o] / yn;
        out.loss += (1.0 - cosv) * inv_n;
        for (std::size_t o = 0; o < m; ++o)
            dp[o] = -(yrow[o] / yn - cosv * p[o] / pn) / pn * inv_n;
        for (std::size_t o = 0; o < m; ++o) {
            out.d_b[o] += dp[o];
            auto wrow = out.d_w.row(o);
            for (std::size_t k = 0; k < c; ++k) wrow[k] += dp[o] * zrow[k];
        }
        auto dzrow = out.d_z.row(i);
        for (std::size_t o = 0; o < m; ++o) {
            const auto wrow = w.row(o);
            for (std::size_t k = 0; k < c; ++k) dzrow[k] += dp[o] * wrow[k];
        }
    }
    return out;
}

double combined_loss(const RelaState& state, const std::function<double()>& rela_term,
                     const std::function<double()>& ssl_term) {
    if (state.lambda != 0 && state.lambda != 1)
        throw std::invalid_argument("combined_loss: lambda must be 0 or 1");
    return state.lambda == 1 ? rela_term() : ssl_term();
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (sgd_momentum < 0.0 || sgd_momentum >= 1.0)
        throw std::invalid_argument("TrainConfig: sgd_momentum must be in [0, 1)");
    if (aug_std < 0.0) throw std::invalid_argument("TrainConfig: aug_std must be >= 0");
    if (target_refresh_k && *target_refresh_k == 0)
        throw std::invalid_argument("TrainConfig: target_refresh_k must be >= 1");
    ssl.validate();
}

namespace {

Matrix orthonormal_columns(std::size_t rows, std::size_t cols, RngStream& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    // Gram-Schmidt over columns
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t prev = 0; prev < j; ++prev) {
            double proj = 0.0;
            for (std::size_t i = 0; i < rows; ++i) proj += m(i, j) * m(i, prev);
            for (std::size_t i = 0; i < rows; ++i) m(i, j) -= proj * m(i, prev);
        }
        double n = 0.0;
        for (std::size_t i = 0; i < rows; ++i) n += m(i, j) * m(i, j);
        n = std::sqrt(n);
        if (n < 1e-12) throw std::runtime_error("orthonormal_columns: degenerate draw");
        for (std::size_t i = 0; i < rows; ++i) m(i, j) /= n;
    }
    return m;
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), src.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = src.row(rows[i]);
        std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
}

Matrix add_noise(const Matrix& x, double std, RngStream& rng) {
    Matrix out = x;
    if (std > 0.0)
        for (double& v : out.data()) v += std * rng.normal();
    return out;
}

class Optimizer {
public:
    Optimizer(OptimizerKind kind, std::size_t n, const TrainConfig& cfg) {
        if (kind == OptimizerKind::adam)
            adam_.emplace(n, cfg.learning_rate);
        else
            sgd_.emplace(n, cfg.learning_rate, cfg.sgd_momentum);
    }
    void step(Vector& params, const Vector& grads) {
        if (adam_)
            adam_->step(params, grads);
        else
            sgd_->step(params, grads);
    }

private:
    std::optional<AdamOptimizer> adam_;
    std::optional<SgdMomentumOptimizer> sgd_;
};

}  // namespace

TrainResult train_rela(Encoder encoder, const Matrix& samples, const TargetStore& store,
                       const TrainConfig& cfg, RngStream& rng,
                       const PriorModel* refresh_prior, std::size_t checkpoint_every,
                       const CheckpointFn& on_checkpoint) {
    cfg.validate();
    if (store.rows != samples.rows())
        throw std::invalid_argument("train_rela: store rows must equal sample count");
    if (samples.cols() != encoder.input_dim())
        throw std::invalid_argument("train_rela: encoder input width mismatch");

    Matrix targets = store.to_matrix();
    const std::size_t n_out = encoder.output_dim();
    const std::size_t m_tgt = targets.cols();

    TrainResult result;
    result.state.lambda = cfg.rela_enabled ? 1 : 0;
    result.state.transport_b.assign(m_tgt, 0.0);
    if (m_tgt == n_out)
        result.state.transport_w = Matrix::identity(m_tgt);
    else
        result.state.transport_w = orthonormal_columns(m_tgt, n_out, rng);

    // parameter groups: encoder theta, transport (W, b), SSL predictor
    Vector theta;
    encoder.to_flat(theta);
    Optimizer theta_opt(cfg.optimizer, theta.size(), cfg);
    Optimizer transport_opt(cfg.optimizer, m_tgt * n_out + m_tgt, cfg);
    Matrix predictor_w = Matrix::identity(n_out);
    Vector predictor_b(n_out, 0.0);
    Optimizer predictor_opt(cfg.optimizer, n_out * n_out + n_out, cfg);

    Encoder ema_target = encoder;  // EMA branch for the byol target
    Vector ema_flat;
    ema_target.to_flat(ema_flat);

    const std::size_t steps_per_epoch =
        (samples.rows() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;

    auto record = [&](std::size_t step, std::size_t epoch, int phase_lambda, double loss) {
        RunRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.phase = phase_lambda == 1 ? "rela" : "ssl";
        rec.loss = loss;
        rec.lambda = result.state.lambda;
        rec.ell_s = result.state.ell_s;
        rec.ell_f = result.state.ell_f;
        result.log.records.push_back(std::move(rec));
    };

    // record 0: full-set loss of the active phase before any update
    {
        double loss0;
        if (result.state.lambda == 1) {
            const Matrix z = encoder.forward(samples);
            loss0 = rela_loss_batch(z, result.state.transport_w, result.state.transport_b,
                                    targets)
                        .loss;
        } else {
            const Matrix z = encoder.forward(samples);
            loss0 = byol_loss(z, z, predictor_w, predictor_b);
        }
        record(0, 0, result.state.lambda, loss0);
    }
    if (checkpoint_every > 0 && on_checkpoint) on_checkpoint(0, encoder);

    std::vector<std::size_t> batch(cfg.batch_size);
    Vector grad_flat, pack, pack_grad;
    for (std::size_t step = 1; step <= total_steps; ++step) {
        const std::size_t epoch = (step - 1) / steps_per_epoch;

        if (refresh_prior && cfg.target_refresh_k && epoch > 0 &&
            (step - 1) % steps_per_epoch == 0 && epoch % *cfg.target_refresh_k == 0) {
            Matrix fresh = generate_targets(*refresh_prior, samples);
            targets = store.pca ? pca_transform(*store.pca, fresh) : std::move(fresh);
        }

        for (auto& idx : batch) idx = rng.uniform_int(samples.rows());
        const Matrix xb = gather_rows(samples, batch);

        double step_loss = combined_loss(
            result.state,
            [&] {
                const Matrix view = add_noise(xb, cfg.aug_std, rng);
                Mlp::Cache cache;
                const Matrix z = encoder.forward(view, cache);
                const Matrix yb = gather_rows(targets, batch);
                RelaLossGrads lg = rela_loss_batch(z, result.state.transport_w,
                                                   result.state.transport_b, yb);
                const Mlp::Grads eg = encoder.backward(cache, lg.d_z);
                eg.flatten(grad_flat);
                theta_opt.step(theta, grad_flat);
                encoder.from_flat(theta);
                pack.assign(result.state.transport_w.data().begin(),
                            result.state.transport_w.data().end());
                pack.insert(pack.end(), result.state.transport_b.begin(),
                            result.state.transport_b.end());
                pack_grad.assign(lg.d_w.data().begin(), lg.d_w.data().end());
                pack_grad.insert(pack_grad.end(), lg.d_b.begin(), lg.d_b.end());
                transport_opt.step(pack, pack_grad);
                std::copy(pack.begin(), pack.begin() + result.state.transport_w.size(),
                          result.state.transport_w.data().begin());
                std::copy(pack.begin() + result.state.transport_w.size(), pack.end(),
                          result.state.transport_b.begin());
                return lg.loss;
            },
            [&] {
                const Matrix view1 = add_noise(xb, cfg.aug_std, rng);
                const Matrix view2 = add_noise(xb, cfg.aug_std, rng);
                Mlp::Cache cache;
                const Matrix online = encoder.forward(view1, cache);
                double loss;
                Matrix d_online;
                switch (cfg.ssl.method) {
                    case SslMethod::byol:
                    case SslMethod::simsiam: {
                        const Matrix target = cfg.ssl.method == SslMethod::byol
                                                  ? ema_target.forward(view2)
                                                  : encoder.forward(view2);
                        ByolGrads bg = byol_grad(online, target, predictor_w, predictor_b);
                        loss = byol_loss(online, target, predictor_w, predictor_b);
                        d_online = std::move(bg.d_online);
                        pack.assign(predictor_w.data().begin(), predictor_w.data().end());
                        pack.insert(pack.end(), predictor_b.begin(), predictor_b.end());
                        pack_grad.assign(bg.d_predictor_w.data().begin(),
                                         bg.d_predictor_w.data().end());
                        pack_grad.insert(pack_grad.end(), bg.d_predictor_b.begin(),
                                         bg.d_predictor_b.end());
                        predictor_opt.step(pack, pack_grad);
                        std::copy(pack.begin(), pack.begin() + predictor_w.size(),
                                  predictor_w.data().begin());
                        std::copy(pack.begin() + predictor_w.size(), pack.end(),
                                  predictor_b.begin());
                        break;
                    }
                    case SslMethod::infonce: {
                        EmbeddingBatch eb{online, encoder.forward(view2), std::nullopt};
                        loss = infonce_loss(eb, cfg.ssl.temperature);
                        d_online = infonce_grad(eb, cfg.ssl.temperature);
                        break;
                    }
                    case SslMethod::barlow: {
                        const Matrix z2 = encoder.forward(view2);
                        loss = barlow_loss(online, z2, cfg.ssl.barlow_weight);
                        d_online = barlow_grad(online, z2, cfg.ssl.barlow_weight);
                        break;
                    }
                    default:
                        throw std::logic_error("train_rela: unhandled ssl method");
                }
                const Mlp::Grads eg = encoder.backward(cache, d_online);
                eg.flatten(grad_flat);
                theta_opt.step(theta, grad_flat);
                encoder.from_flat(theta);
                if (cfg.ssl.method == SslMethod::byol) {
                    ema_update(ema_flat, theta, cfg.ssl.ema_momentum);
                    ema_target.from_flat(ema_flat);
                }
                return loss;
            });

        if (!std::isfinite(step_loss))
            throw std::runtime_error("train_rela: non-finite loss at step " +
                                     std::to_string(step));

        const int lambda_before = result.state.lambda;
        result.state = scheduler_step(result.state, step_loss);
        if (lambda_before == 1 && result.state.lambda == 0) {
            result.log.flip_step = result.state.step;
            // the EMA branch picks up training from the current encoder
            ema_flat = theta;
            ema_target.from_flat(ema_flat);
        }
        record(step, epoch, lambda_before, step_loss);
        if (checkpoint_every > 0 && on_checkpoint && step % checkpoint_every == 0)
            on_checkpoint(step, encoder);
    }

    result.encoder = std::move(encoder);
    return result;
}

}  // namespace rela
