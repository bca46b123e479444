#include "rela/case_study.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rela {

void MixtureSpec::validate() const {
    if (!(mu1 < mu2)) throw std::invalid_argument("MixtureSpec: mu1 must be < mu2");
    if (!(sigma > 0.0)) throw std::invalid_argument("MixtureSpec: sigma must be > 0");
    if (dim == 0) throw std::invalid_argument("MixtureSpec: dim must be >= 1");
    if (alpha && !(*alpha > 0.0)) throw std::invalid_argument("MixtureSpec: alpha must be > 0");
    if (beta && !(*beta > 0.0)) throw std::invalid_argument("MixtureSpec: beta must be > 0");
}

void SgdConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("SgdConfig: steps must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("SgdConfig: batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("SgdConfig: learning_rate invalid");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("SgdConfig: momentum must be in [0, 1)");
}

TinyNet tiny_init(std::size_t dim, std::size_t hidden, RngStream& rng) {
    TinyNet net;
    net.theta2 = Matrix(hidden, dim);
    net.theta3.assign(hidden, 0.0);
    net.theta1.assign(hidden, 0.0);
    const double bound_in = 1.0 / std::sqrt(static_cast<double>(dim));
    const double bound_out = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& v : net.theta2.data()) v = (2.0 * rng.uniform() - 1.0) * bound_in;
    for (double& v : net.theta3) v = (2.0 * rng.uniform() - 1.0) * bound_in;
    for (double& v : net.theta1) v = (2.0 * rng.uniform() - 1.0) * bound_out;
    net.theta4 = (2.0 * rng.uniform() - 1.0) * bound_out;
    return net;
}

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double tiny_forward(const TinyNet& net, std::span<const double> x) {
    if (x.size() != net.dim()) throw std::invalid_argument("tiny_forward: dimension mismatch");
    double z = net.theta4;
    for (std::size_t h = 0; h < net.hidden(); ++h) {
        double pre = net.theta3[h] + dot(net.theta2.row(h), x);
        if (pre > 0.0) z += net.theta1[h] * pre;
    }
    return sigmoid(z);
}

Vector tiny_forward_batch(const TinyNet& net, const Matrix& x) {
    Vector out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = tiny_forward(net, x.row(i));
    return out;
}

double tiny_mse(const TinyNet& net, const LabeledSet& set) {
    double acc = 0.0;
    for (std::size_t i = 0; i < set.x.rows(); ++i) {
        const double d = tiny_forward(net, set.x.row(i)) - set.y[i];
        acc += d * d;
    }
    return acc / static_cast<double>(set.x.rows());
}

TinyGrads tiny_mse_grad(const TinyNet& net, const LabeledSet& set,
                        std::span<const std::size_t> rows) {
    TinyGrads g;
    g.theta2 = Matrix(net.hidden(), net.dim());
    g.theta3.assign(net.hidden(), 0.0);
    g.theta1.assign(net.hidden(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (const std::size_t r : rows) {
        const auto x = set.x.row(r);
        double z = net.theta4;
        Vector pre(net.hidden());
        for (std::size_t h = 0; h < net.hidden(); ++h) {
            pre[h] = net.theta3[h] + dot(net.theta2.row(h), x);
            if (pre[h] > 0.0) z += net.theta1[h] * pre[h];
        }
        const double p = sigmoid(z);
        // d(mse)/dz = 2 (p - y) p (1 - p)
        const double dz = 2.0 * (p - set.y[r]) * p * (1.0 - p) * inv_n;
        g.theta4 += dz;
        for (std::size_t h = 0; h < net.hidden(); ++h) {
            if (pre[h] > 0.0) {
                g.theta1[h] += dz * pre[h];
                const double dh = dz * net.theta1[h];
                g.theta3[h] += dh;
                auto grow = g.theta2.row(h);
                for (std::size_t j = 0; j < net.dim(); ++j) grow[j] += dh * x[j];
            }
        }
    }
    return g;
}

LabeledSet make_mixture(const MixtureSpec& spec, std::size_t n, RngStream& rng) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("make_mixture: n must be >= 1");
    LabeledSet set;
    set.x = Matrix(n, spec.dim);
    set.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = rng.uniform() < 0.5 ? 0.0 : 1.0;
        const double mu = y == 0.0 ? spec.mu1 : spec.mu2;
        auto row = set.x.row(i);
        for (std::size_t j = 0; j < spec.dim; ++j) row[j] = mu + spec.sigma * rng.normal();
        set.y[i] = y;
    }
    return set;
}

LabeledSet relabel(const LabeledSet& set, double rho, const TinyNet& prior) {
    if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("relabel: rho must be in [0, 1]");
    if (prior.dim() != set.x.cols()) throw std::invalid_argument("relabel: prior dim mismatch");
    LabeledSet out;
    out.x = set.x;
    out.y.resize(set.y.size());
    for (std::size_t i = 0; i < set.y.size(); ++i)
        out.y[i] = rho * tiny_forward(prior, set.x.row(i)) + (1.0 - rho) * set.y[i];
    return out;
}

namespace {

struct Momentum {
    Matrix theta2;
    Vector theta3;
    Vector theta1;
    double theta4 = 0.0;
};

double project(const TinyNet& net, const ParamDirection& dir) {
    double s = 0.0;
    for (std::size_t i = 0; i < net.theta2.size(); ++i)
        s += net.theta2.data()[i] * dir.theta2.data()[i];
    for (std::size_t i = 0; i < net.theta3.size(); ++i) s += net.theta3[i] * dir.theta3[i];
    for (std::size_t i = 0; i < net.theta1.size(); ++i) s += net.theta1[i] * dir.theta1[i];
    return s + net.theta4 * dir.theta4;
}

}  // namespace

std::pair<TinyNet, Trajectory> train_tiny(const LabeledSet& set, const LabeledSet& val,
                                          const SgdConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (set.x.rows() == 0 || val.x.rows() == 0)
        throw std::invalid_argument("train_tiny: empty dataset");

    TinyNet net = tiny_init(set.x.cols(), 50, rng);
    // fixed projection directions for the trajectory records
    RngStream dir_rng = rng.substream(rng.stream() ^ 0x72616A64ULL);
    ParamDirection da = random_direction(net, dir_rng);
    ParamDirection db = random_direction(net, dir_rng);

    Momentum vel;
    vel.theta2 = Matrix(net.hidden(), net.dim());
    vel.theta3.assign(net.hidden(), 0.0);
    vel.theta1.assign(net.hidden(), 0.0);

    Trajectory traj;
    traj.reserve(cfg.steps + 1);
    auto record = [&](std::size_t step) {
        TrajectoryRecord rec;
        rec.step = step;
        rec.proj_a = project(net, da);
        rec.proj_b = project(net, db);
        rec.train_mse = tiny_mse(net, set);
        rec.val_mse = tiny_mse(net, val);
        if (!std::isfinite(rec.train_mse) || !std::isfinite(rec.val_mse))
            throw std::runtime_error("train_tiny: non-finite loss at step " +
                                     std::to_string(step));
        traj.push_back(rec);
    };
    record(0);

    std::vector<std::size_t> batch(cfg.batch_size);
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        for (auto& idx : batch) idx = rng.uniform_int(set.x.rows());
        const TinyGrads g = tiny_mse_grad(net, set, batch);
        for (std::size_t i = 0; i < vel.theta2.size(); ++i) {
            vel.theta2.data()[i] = cfg.momentum * vel.theta2.data()[i] + g.theta2.data()[i];
            net.theta2.data()[i] -= cfg.learning_rate * vel.theta2.data()[i];
        }
        for (std::size_t i = 0; i < vel.theta3.size(); ++i) {
            vel.theta3[i] = cfg.momentum * vel.theta3[i] + g.theta3[i];
            net.theta3[i] -= cfg.learning_rate * vel.theta3[i];
        }
        for (std::size_t i = 0; i < vel.theta1.size(); ++i) {
            vel.theta1[i] = cfg.momentum * vel.theta1[i] + g.theta1[i];
            net.theta1[i] -= cfg.learning_rate * vel.theta1[i];
        }
        vel.theta4 = cfg.momentum * vel.theta4 + g.theta4;
        net.theta4 -= cfg.learning_rate * vel.theta4;
        record(step);
    }
    return {std::move(net), std::move(traj)};
}

Vector linear_1d_sgd(double mu1, double mu2, double alpha, double beta, double eta,
                     std::size_t steps, double theta0, double rho, RngStream& rng) {
    if (!(eta > 0.0) || !(eta < 1.0))
        throw std::invalid_argument("linear_1d_sgd: eta must be in (0, 1)");
    if (rho < 0.0 || rho > 1.0)
        throw std::invalid_argument("linear_1d_sgd: rho must be in [0, 1]");
    const double theta_star = -(mu1 + mu2) / 2.0;
    Vector traj(steps + 1);
    double theta = theta0;
    traj[0] = theta;
    for (std::size_t t = 0; t < steps; ++t) {
        const double y = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double mu = y < 0.0 ? mu1 : mu2;
        const double g = inverse_regularized_gamma_p(1.0 / beta, rng.uniform_open());
        const double mag = alpha * std::pow(g, 1.0 / beta);
        const double x = rng.uniform() < 0.5 ? mu - mag : mu + mag;
        double label = y;
        if (rho > 0.0) {
            const double optimal = x + theta_star >= 0.0 ? 1.0 : -1.0;
            label = rho * optimal + (1.0 - rho) * y;
        }
        theta -= eta * (theta + (x - label));
        traj[t + 1] = theta;
    }
    return traj;
}

double closed_form_gap(double mu1, double mu2, double alpha, double beta, double eta,
                       std::size_t t, double theta0) {
    if (!(eta > 0.0) || !(eta < 1.0))
        throw std::invalid_argument("closed_form_gap: eta must be in (0, 1)");
    const double theta_star = -(mu1 + mu2) / 2.0;
    const double decay = std::pow(1.0 - eta, 2.0 * static_cast<double>(t));
    const double gap0 = (theta0 - theta_star) * (theta0 - theta_star);
    const double half_gap = 1.0 - (mu2 - mu1) / 2.0;
    const double second_moment = generalized_gaussian_variance(alpha, beta) + half_gap * half_gap;
    return decay * gap0 + eta / (2.0 - eta) * (1.0 - decay) * second_moment;
}

double bayes_boundary(const MixtureSpec& spec) {
    spec.validate();
    return (spec.mu1 + spec.mu2) / 2.0;
}

ParamDirection random_direction(const TinyNet& like, RngStream& rng) {
    ParamDirection d;
    d.theta2 = Matrix(like.hidden(), like.dim());
    d.theta3.assign(like.hidden(), 0.0);
    d.theta1.assign(like.hidden(), 0.0);
    for (double& v : d.theta2.data()) v = rng.normal();
    for (double& v : d.theta3) v = rng.normal();
    for (double& v : d.theta1) v = rng.normal();
    d.theta4 = rng.normal();
    return d;
}

namespace {

double block_norm(std::span<const double> v) { return norm2(v); }

void rescale(std::span<double> dir, double target_norm) {
    const double n = norm2(dir);
    if (n == 0.0) throw std::invalid_argument("filter_normalize: zero direction block");
    const double s = target_norm / n;
    for (double& v : dir) v *= s;
}

}  // namespace

ParamDirection filter_normalize(const ParamDirection& dir, const TinyNet& center) {
    ParamDirection out = dir;
    rescale(out.theta2.data(), block_norm(center.theta2.data()));
    rescale(out.theta3, block_norm(center.theta3));
    rescale(out.theta1, block_norm(center.theta1));
    const double t4 = std::fabs(dir.theta4);
    if (t4 == 0.0) throw std::invalid_argument("filter_normalize: zero direction block");
    out.theta4 = dir.theta4 / t4 * std::fabs(center.theta4);
    return out;
}

Matrix loss_landscape(const TinyNet& center, const ParamDirection& dir1,
                      const ParamDirection& dir2, double half_width, std::size_t grid,
                      const LabeledSet& val) {
    if (grid == 0) throw std::invalid_argument("loss_landscape: grid must be >= 1");
    Matrix surface(grid, grid);
    auto coord = [&](std::size_t i) {
        if (grid == 1) return 0.0;
        return -half_width + 2.0 * half_width * static_cast<double>(i) /
                                 static_cast<double>(grid - 1);
    };
    TinyNet probe = center;
    for (std::size_t i = 0; i < grid; ++i) {
        const double a = coord(i);
        for (std::size_t j = 0; j < grid; ++j) {
            const double b = coord(j);
            for (std::size_t k = 0; k < probe.theta2.size(); ++k)
                probe.theta2.data()[k] = center.theta2.data()[k] + a * dir1.theta2.data()[k] +
                                         b * dir2.theta2.data()[k];
            for (std::size_t k = 0; k < probe.theta3.size(); ++k)
                probe.theta3[k] = center.theta3[k] + a * dir1.theta3[k] + b * dir2.theta3[k];
            for (std::size_t k = 0; k < probe.theta1.size(); ++k)
                probe.theta1[k] = center.theta1[k] + a * dir1.theta1[k] + b * dir2.theta1[k];
            probe.theta4 = center.theta4 + a * dir1.theta4 + b * dir2.theta4;
            surface(i, j) = tiny_mse(probe, val);
        }
    }
    return surface;
}

double steps_to_threshold(const Trajectory& traj, double threshold) {
    if (traj.empty()) return std::numeric_limits<double>::infinity();
    if (traj.front().val_mse <= threshold) return 0.0;
    for (std::size_t i = 1; i < traj.size(); ++i) {
        const double prev = traj[i - 1].val_mse;
        const double cur = traj[i].val_mse;
        if (cur <= threshold) {
            const double span = prev - cur;
            const double frac = span > 0.0 ? (prev - threshold) / span : 1.0;
            return static_cast<double>(traj[i - 1].step) +
                   frac * static_cast<double>(traj[i].step - traj[i - 1].step);
        }
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace rela
