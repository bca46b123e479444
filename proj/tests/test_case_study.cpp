#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "rela/case_study.hpp"

using namespace rela;

namespace {

MixtureSpec default_spec() { return MixtureSpec{}; }

Vector flatten(const TinyNet& net) {
    Vector out(net.theta2.data().begin(), net.theta2.data().end());
    out.insert(out.end(), net.theta3.begin(), net.theta3.end());
    out.insert(out.end(), net.theta1.begin(), net.theta1.end());
    out.push_back(net.theta4);
    return out;
}

void unflatten(TinyNet& net, const Vector& flat) {
    std::size_t pos = 0;
    for (double& v : net.theta2.data()) v = flat[pos++];
    for (double& v : net.theta3) v = flat[pos++];
    for (double& v : net.theta1) v = flat[pos++];
    net.theta4 = flat[pos++];
}

}  // namespace

TEST_CASE("make_mixture degenerate variance pins samples to the means") {
    MixtureSpec spec = default_spec();
    spec.sigma = 1e-13;
    RngStream rng(1);
    const LabeledSet set = make_mixture(spec, 64, rng);
    for (std::size_t i = 0; i < set.y.size(); ++i) {
        const double mu = set.y[i] == 0.0 ? spec.mu1 : spec.mu2;
        for (double v : set.x.row(i)) CHECK(std::fabs(v - mu) < 1e-12);
    }
}

TEST_CASE("make_mixture class-conditional means and label frequency") {
    RngStream rng(2);
    const LabeledSet set = make_mixture(default_spec(), 100'000, rng);
    double sum0 = 0.0, sum1 = 0.0, ones = 0.0;
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < set.y.size(); ++i) {
        for (double v : set.x.row(i)) {
            if (set.y[i] == 0.0) {
                sum0 += v;
                ++n0;
            } else {
                sum1 += v;
                ++n1;
            }
        }
        ones += set.y[i];
    }
    CHECK(std::fabs(sum0 / n0 - 1.0) < 0.01);
    CHECK(std::fabs(sum1 / n1 - 2.0) < 0.01);
    CHECK(std::fabs(ones / set.y.size() - 0.5) < 0.005);

    MixtureSpec bad = default_spec();
    bad.mu1 = 3.0;  // mu1 >= mu2
    RngStream rng2(3);
    CHECK_THROWS_AS(make_mixture(bad, 4, rng2), std::invalid_argument);
}

TEST_CASE("relabel endpoints and affinity in rho") {
    RngStream rng(4);
    const LabeledSet set = make_mixture(default_spec(), 50, rng);
    const TinyNet prior = tiny_init(set.x.cols(), 50, rng);

    const LabeledSet same = relabel(set, 0.0, prior);
    CHECK(same.y == set.y);

    const LabeledSet pure = relabel(set, 1.0, prior);
    for (std::size_t i = 0; i < set.y.size(); ++i)
        CHECK(pure.y[i] == tiny_forward(prior, set.x.row(i)));

    const double rho = 0.37;
    const LabeledSet mixed = relabel(set, rho, prior);
    for (std::size_t i = 0; i < set.y.size(); ++i)
        CHECK(mixed.y[i] == rho * pure.y[i] + (1.0 - rho) * same.y[i]);

    CHECK(mixed.x == set.x);
    CHECK_THROWS_AS(relabel(set, 1.5, prior), std::invalid_argument);
}

TEST_CASE("relabel arithmetic example") {
    LabeledSet set;
    set.x = Matrix(1, 2, {0.0, 0.0});
    set.y = {1.0};
    TinyNet prior;  // all-zero parameters: f(x) = sigmoid(0) = 0.5
    prior.theta2 = Matrix(50, 2);
    prior.theta3.assign(50, 0.0);
    prior.theta1.assign(50, 0.0);
    const LabeledSet out = relabel(set, 0.5, prior);
    CHECK(out.y[0] == doctest::Approx(0.75));  // 0.5 * 0.5 + 0.5 * 1
}

TEST_CASE("tiny_forward basics and gradient oracle") {
    TinyNet zero;
    zero.theta2 = Matrix(50, 2);
    zero.theta3.assign(50, 0.0);
    zero.theta1.assign(50, 0.0);
    CHECK(tiny_forward(zero, std::vector<double>{0.3, -0.7}) == 0.5);

    RngStream rng(5);
    const TinyNet net = tiny_init(2, 50, rng);
    for (int i = 0; i < 100; ++i) {
        const Vector x = {rng.normal() * 10.0, rng.normal() * 10.0};
        const double p = tiny_forward(net, x);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }

    // central finite differences of the MSE loss at a random point
    LabeledSet point;
    point.x = Matrix(1, 2, {rng.normal(), rng.normal()});
    point.y = {0.7};
    const std::vector<std::size_t> rows{0};
    const TinyGrads g = tiny_mse_grad(net, point, rows);
    const Vector analytic = [&] {
        Vector v(g.theta2.data().begin(), g.theta2.data().end());
        v.insert(v.end(), g.theta3.begin(), g.theta3.end());
        v.insert(v.end(), g.theta1.begin(), g.theta1.end());
        v.push_back(g.theta4);
        return v;
    }();
    TinyNet probe = net;
    Vector flat = flatten(net);
    const double eps = 1e-5;
    double max_rel = 0.0;
    for (std::size_t k = 0; k < flat.size(); ++k) {
        const double keep = flat[k];
        flat[k] = keep + eps;
        unflatten(probe, flat);
        const double hi = tiny_mse(probe, point);
        flat[k] = keep - eps;
        unflatten(probe, flat);
        const double lo = tiny_mse(probe, point);
        flat[k] = keep;
        const double fd = (hi - lo) / (2.0 * eps);
        if (std::fabs(fd) > 1e-7)
            max_rel = std::max(max_rel, std::fabs(analytic[k] - fd) / std::fabs(fd));
        else
            CHECK(std::fabs(analytic[k] - fd) < 1e-7);
    }
    unflatten(probe, flat);
    CHECK(max_rel <= 1e-6);
}

TEST_CASE("train_tiny with zero learning rate keeps the initialization") {
    RngStream data_rng(6);
    const LabeledSet train = make_mixture(default_spec(), 100, data_rng);
    const LabeledSet val = make_mixture(default_spec(), 100, data_rng);
    SgdConfig cfg;
    cfg.steps = 50;
    cfg.learning_rate = 0.0;
    RngStream rng(7);
    const auto [net, traj] = train_tiny(train, val, cfg, rng);
    RngStream rng2(7);
    const TinyNet init = tiny_init(2, 50, rng2);
    CHECK(flatten(net) == flatten(init));
    CHECK(traj.size() == cfg.steps + 1);
    for (const auto& rec : traj) CHECK(rec.val_mse == traj.front().val_mse);
}

TEST_CASE("train_tiny interpolates a single sample") {
    LabeledSet one;
    one.x = Matrix(1, 2, {0.5, -0.25});
    one.y = {0.8};
    SgdConfig cfg;
    cfg.steps = 10'000;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.0;
    RngStream rng(8);
    const auto [net, traj] = train_tiny(one, one, cfg, rng);
    CHECK(traj.back().train_mse <= 1e-4);
}

TEST_CASE("train_tiny low-variance samples beat high-variance samples") {
    MixtureSpec original = default_spec();
    RngStream val_rng(9);
    const LabeledSet val = make_mixture(original, 2000, val_rng);
    SgdConfig cfg;
    cfg.steps = 400;
    std::vector<double> low, high;
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
        for (double sigma : {0.1, 1.0}) {
            MixtureSpec spec = original;
            spec.sigma = sigma;
            RngStream rng(100 + trial, sigma == 0.1 ? 0 : 1);
            const LabeledSet train = make_mixture(spec, 500, rng);
            const auto [net, traj] = train_tiny(train, val, cfg, rng);
            (sigma == 0.1 ? low : high).push_back(traj.back().val_mse);
        }
    }
    std::sort(low.begin(), low.end());
    std::sort(high.begin(), high.end());
    CHECK(low[low.size() / 2] < high[high.size() / 2]);
}

TEST_CASE("linear_1d_sgd fixed point at the optimum") {
    RngStream rng(10);
    // mu2 - mu1 = 2 makes x - y + theta* vanish at zero variance
    const Vector traj = linear_1d_sgd(-1.0, 1.0, 1e-12, 2.0, 0.3, 200, 0.0, 0.0, rng);
    for (double theta : traj) CHECK(std::fabs(theta) < 1e-10);
}

TEST_CASE("linear_1d_sgd trajectory mean approaches the optimum") {
    const double mu1 = 1.0, mu2 = 2.0;
    double acc = 0.0;
    const std::size_t runs = 400;
    for (std::size_t r = 0; r < runs; ++r) {
        RngStream rng(11, r);
        const Vector traj = linear_1d_sgd(mu1, mu2, 1.0, 2.0, 0.1, 300, 0.0, 0.0, rng);
        acc += traj.back();
    }
    CHECK(acc / runs == doctest::Approx(-1.5).epsilon(0.05));
}

TEST_CASE("linear_1d_sgd matches the closed form (small Monte Carlo)") {
    const double mu1 = 1.0, mu2 = 2.0, alpha = 1.0, beta = 2.0, eta = 0.1, theta0 = 0.0;
    const double theta_star = -1.5;
    const std::size_t runs = 20'000;
    const std::vector<std::size_t> checkpoints{10, 100};
    std::vector<double> acc(checkpoints.size(), 0.0);
    for (std::size_t r = 0; r < runs; ++r) {
        RngStream rng(12, r);
        const Vector traj = linear_1d_sgd(mu1, mu2, alpha, beta, eta, 100, theta0, 0.0, rng);
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
            const double gap = traj[checkpoints[c]] - theta_star;
            acc[c] += gap * gap;
        }
    }
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        const double mc = acc[c] / runs;
        const double exact = closed_form_gap(mu1, mu2, alpha, beta, eta, checkpoints[c], theta0);
        CHECK(mc == doctest::Approx(exact).epsilon(0.03));
    }
}

TEST_CASE("closed_form_gap values") {
    // t = 0 collapses to the initial squared gap
    CHECK(closed_form_gap(1.0, 2.0, 1.0, 2.0, 0.1, 0, 0.3) ==
          doctest::Approx((0.3 + 1.5) * (0.3 + 1.5)).epsilon(1e-12));
    // t -> infinity limit: (0.1 / 1.9) * (0.5 + 0.25)
    CHECK(closed_form_gap(1.0, 2.0, 1.0, 2.0, 0.1, 1'000'000, 0.0) ==
          doctest::Approx(0.0394736842105263).epsilon(1e-9));
    // monotone increasing in alpha
    double prev = -1.0;
    for (double alpha : {0.5, 1.0, 1.5, 2.0}) {
        const double v = closed_form_gap(1.0, 2.0, alpha, 2.0, 0.1, 50, 0.0);
        CHECK(v > prev);
        prev = v;
    }
    CHECK_THROWS_AS(closed_form_gap(1.0, 2.0, 1.0, 2.0, 1.5, 10, 0.0), std::invalid_argument);
}

TEST_CASE("bayes_boundary is the midpoint, independent of sigma") {
    MixtureSpec spec = default_spec();
    CHECK(bayes_boundary(spec) == 1.5);
    spec.sigma = 0.01;
    CHECK(bayes_boundary(spec) == 1.5);
    spec.sigma = 10.0;
    CHECK(bayes_boundary(spec) == 1.5);
    MixtureSpec sym = default_spec();
    sym.mu1 = -2.5;
    sym.mu2 = 2.5;
    CHECK(bayes_boundary(sym) == 0.0);
}

TEST_CASE("loss_landscape grid and symmetry") {
    RngStream rng(13);
    const LabeledSet val = make_mixture(default_spec(), 200, rng);
    const TinyNet center = tiny_init(2, 50, rng);
    ParamDirection d1 = filter_normalize(random_direction(center, rng), center);
    ParamDirection d2 = filter_normalize(random_direction(center, rng), center);

    const Matrix single = loss_landscape(center, d1, d2, 0.5, 1, val);
    CHECK(single.rows() == 1);
    CHECK(single(0, 0) == doctest::Approx(tiny_mse(center, val)).epsilon(1e-12));

    const std::size_t grid = 5;
    const Matrix surface = loss_landscape(center, d1, d2, 0.5, grid, val);
    CHECK(surface(grid / 2, grid / 2) == doctest::Approx(tiny_mse(center, val)).epsilon(1e-12));

    // negating dir1 mirrors the first axis
    ParamDirection neg = d1;
    for (double& v : neg.theta2.data()) v = -v;
    for (double& v : neg.theta3) v = -v;
    for (double& v : neg.theta1) v = -v;
    neg.theta4 = -neg.theta4;
    const Matrix mirrored = loss_landscape(center, neg, d2, 0.5, grid, val);
    for (std::size_t i = 0; i < grid; ++i)
        for (std::size_t j = 0; j < grid; ++j)
            CHECK(surface(i, j) == doctest::Approx(mirrored(grid - 1 - i, j)).epsilon(1e-10));
}

TEST_CASE("steps_to_threshold interpolates the first crossing") {
    Trajectory traj;
    for (std::size_t s = 0; s <= 4; ++s) {
        TrajectoryRecord rec;
        rec.step = s;
        rec.val_mse = 1.0 - 0.2 * static_cast<double>(s);  // 1.0, 0.8, 0.6, 0.4, 0.2
        traj.push_back(rec);
    }
    CHECK(steps_to_threshold(traj, 0.5) == doctest::Approx(2.5));
    CHECK(steps_to_threshold(traj, 2.0) == 0.0);
    CHECK(std::isinf(steps_to_threshold(traj, 0.1)));
}
