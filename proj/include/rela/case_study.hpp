#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rela/core_math.hpp"

namespace rela {

/// Two-component isotropic Gaussian mixture, one mean per class.
struct MixtureSpec {
    double mu1 = 1.0;
    double mu2 = 2.0;
    double sigma = 0.5;
    std::size_t dim = 2;
    // generalized-Gaussian shape, used by the 1-D linear setting
    std::optional<double> alpha;
    std::optional<double> beta;

    void validate() const;
};

struct LabeledSet {
    Matrix x;  // n x dim
    Vector y;  // n, entries in [0, 1]
};

/// Binary classifier sigma(theta1 . ReLU(theta2 x + theta3) + theta4).
struct TinyNet {
    Matrix theta2;  // hidden x dim
    Vector theta3;  // hidden
    Vector theta1;  // hidden
    double theta4 = 0.0;

    std::size_t hidden() const { return theta1.size(); }
    std::size_t dim() const { return theta2.cols(); }
};

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init per parameter block.
TinyNet tiny_init(std::size_t dim, std::size_t hidden, RngStream& rng);

double tiny_forward(const TinyNet& net, std::span<const double> x);
/// One output per row of x.
Vector tiny_forward_batch(const TinyNet& net, const Matrix& x);
/// Mean squared error of predictions against labels.
double tiny_mse(const TinyNet& net, const LabeledSet& set);

struct TinyGrads {
    Matrix theta2;
    Vector theta3;
    Vector theta1;
    double theta4 = 0.0;
};

/// Gradient of the mean squared error over the given rows.
TinyGrads tiny_mse_grad(const TinyNet& net, const LabeledSet& set,
                        std::span<const std::size_t> rows);

struct SgdConfig {
    std::size_t steps = 1000;
    std::size_t batch_size = 1;
    double learning_rate = 0.002;
    double momentum = 0.98;

    void validate() const;
};

struct TrajectoryRecord {
    std::size_t step = 0;
    double proj_a = 0.0;  // parameter projection onto two fixed directions
    double proj_b = 0.0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

using Trajectory = std::vector<TrajectoryRecord>;  // length steps + 1

/// Samples n points: y ~ Bernoulli(0.5), x ~ N(mu_y * 1, sigma^2 I).
LabeledSet make_mixture(const MixtureSpec& spec, std::size_t n, RngStream& rng);

/// y_hat_i = rho * prior(x_i) + (1 - rho) * y_i. Samples unchanged.
LabeledSet relabel(const LabeledSet& set, double rho, const TinyNet& prior);

/// Momentum SGD on the MSE loss; the trajectory records validation MSE at
/// initialization and after every step. Throws on non-finite loss with the
/// offending step index in the message.
std::pair<TinyNet, Trajectory> train_tiny(const LabeledSet& set, const LabeledSet& val,
                                          const SgdConfig& cfg, RngStream& rng);

/// Online SGD for the 1-D linear setting: one fresh sample per step, labels
/// in {-1, +1} optionally mixed with the optimal-model output at rate rho,
/// update theta <- theta - eta (theta + (x - y)). Returns theta_0..theta_T.
Vector linear_1d_sgd(double mu1, double mu2, double alpha, double beta, double eta,
                     std::size_t steps, double theta0, double rho, RngStream& rng);

/// Exact expected squared gap E[(theta_t - theta*)^2] for the 1-D setting:
/// (1-eta)^{2t} (theta0-theta*)^2
///   + (eta/(2-eta)) (1-(1-eta)^{2t}) [alpha^2 Gamma(3/beta)/Gamma(1/beta)
///                                     + (1-(mu2-mu1)/2)^2].
double closed_form_gap(double mu1, double mu2, double alpha, double beta, double eta,
                       std::size_t t, double theta0);

/// Optimal decision boundary (mu1 + mu2) / 2, independent of sigma.
double bayes_boundary(const MixtureSpec& spec);

/// Parameter-space direction with the same shape as a TinyNet.
struct ParamDirection {
    Matrix theta2;
    Vector theta3;
    Vector theta1;
    double theta4 = 0.0;
};

ParamDirection random_direction(const TinyNet& like, RngStream& rng);
/// Rescales each block of dir to the corresponding block norm of center.
ParamDirection filter_normalize(const ParamDirection& dir, const TinyNet& center);

/// grid x grid validation-MSE surface at center + a dir1 + b dir2 with a, b
/// on a uniform grid over [-half_width, half_width].
Matrix loss_landscape(const TinyNet& center, const ParamDirection& dir1,
                      const ParamDirection& dir2, double half_width, std::size_t grid,
                      const LabeledSet& val);

/// First step (fractional, linearly interpolated) at which the recorded
/// validation MSE crosses below threshold; +infinity if it never does.
double steps_to_threshold(const Trajectory& traj, double threshold);

}  // namespace rela
