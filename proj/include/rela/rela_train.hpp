#pragma once

#include <functional>
#include <optional>
#include <string>

#include "rela/core_math.hpp"
#include "rela/data_factory.hpp"
#include "rela/mlp.hpp"
#include "rela/ssl_zoo.hpp"

namespace rela {

using Encoder = Mlp;

/// Scheduler state plus the learned transport of the cosine loss. lambda
/// flips 1 -> 0 at most once and never back.
struct RelaState {
    int lambda = 1;
    double ell_s = 2.0;  // long-term loss
    double ell_f = 1.0;  // short-term loss
    std::size_t step = 0;
    Matrix transport_w;  // m x n
    Vector transport_b;  // m
};

/// One adaptive-weighting update: while lambda is 1, fold the current loss
/// into the short-term average and that into the long-term average; flip
/// lambda to 0 once exp(-max(ell_s - ell_f, 0)) >= 0.995. History-free given
/// (state, ell_c).
RelaState scheduler_step(RelaState state, double ell_c);

/// 1 - cos(W z + b, y); in [0, 2].
double rela_loss(const Vector& z, const Matrix& w, const Vector& b, const Vector& y);

struct RelaLossGrads {
    double loss = 0.0;
    Matrix d_z;  // N x n
    Matrix d_w;
    Vector d_b;
};

/// Batch mean of the transport-cosine loss with gradients for z, W and b.
RelaLossGrads rela_loss_batch(const Matrix& z, const Matrix& w, const Vector& b,
                              const Matrix& y);

/// Exactly lambda * rela + (1 - lambda) * ssl, evaluating only the active
/// term; the inactive callable is never invoked.
double combined_loss(const RelaState& state, const std::function<double()>& rela_term,
                     const std::function<double()>& ssl_term);

enum class OptimizerKind { adam, sgd_momentum };

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double sgd_momentum = 0.9;
    SslConfig ssl;
    std::optional<std::size_t> target_refresh_k;  // epochs; absent = never
    double aug_std = 0.1;   // additive-noise augmentation for vector samples
    bool rela_enabled = true;  // false trains the plain SSL baseline
    std::uint64_t seed = 0;

    void validate() const;
};

struct RunRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::string phase;  // "rela" | "ssl"
    double loss = 0.0;
    int lambda = 1;
    double ell_s = 0.0;
    double ell_f = 0.0;
};

struct RunLog {
    std::vector<RunRecord> records;
    std::optional<std::size_t> flip_step;
};

struct TrainResult {
    Encoder encoder;
    RelaState state;
    RunLog log;
};

/// Optional per-checkpoint observer (step, current encoder).
using CheckpointFn = std::function<void(std::size_t, const Encoder&)>;

/// Two-phase training: the transport-cosine loss against the stored targets
/// while lambda is 1 (theta, W and b jointly optimized), then the configured
/// SSL objective with a stop-gradient/EMA target branch. The scheduler
/// consumes the mini-batch loss each step. Record 0 holds the initial
/// full-set loss of the active phase.
TrainResult train_rela(Encoder encoder, const Matrix& samples, const TargetStore& store,
                       const TrainConfig& cfg, RngStream& rng,
                       const PriorModel* refresh_prior = nullptr,
                       std::size_t checkpoint_every = 0, const CheckpointFn& on_checkpoint = {});

}  // namespace rela
