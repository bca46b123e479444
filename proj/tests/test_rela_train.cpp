#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rela/case_study.hpp"
#include "rela/rela_train.hpp"

using namespace rela;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    RngStream rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

// the adaptive-weighting recurrence simulated independently of the library
std::size_t recurrence_oracle_flip(const std::function<double(std::size_t)>& stream,
                                   std::size_t max_steps) {
    double ell_f = 1.0, ell_s = 2.0;
    for (std::size_t t = 1; t <= max_steps; ++t) {
        const double ell_c = stream(t);
        ell_f = 0.999 * ell_f + 0.001 * ell_c;
        ell_s = 0.99 * ell_s + 0.01 * ell_f;
        if (std::exp(-std::max(ell_s - ell_f, 0.0)) >= 0.995) return t;
    }
    return 0;  // never
}

}  // namespace

TEST_CASE("scheduler flips at exactly the oracle step on a constant stream") {
    const std::size_t oracle =
        recurrence_oracle_flip([](std::size_t) { return 1.0; }, 10'000);
    CHECK(oracle == 527);

    RelaState state;
    std::size_t flip = 0;
    for (std::size_t t = 1; t <= 10'000 && flip == 0; ++t) {
        state = scheduler_step(state, 1.0);
        if (state.lambda == 0) flip = state.step;
    }
    CHECK(flip == oracle);
}

TEST_CASE("scheduler flip is one-way") {
    RelaState state;
    for (int t = 0; t < 600; ++t) state = scheduler_step(state, 1.0);
    REQUIRE(state.lambda == 0);
    const double ell_s = state.ell_s, ell_f = state.ell_f;
    for (int t = 0; t < 1'000'000; ++t) state = scheduler_step(state, 123.456);
    CHECK(state.lambda == 0);
    CHECK(state.ell_s == ell_s);  // updates gated after the flip
    CHECK(state.ell_f == ell_f);
}

TEST_CASE("a stream holding the gap above the threshold never triggers") {
    // steadily decreasing loss keeps the long-term average lagging behind
    auto stream = [](std::size_t t) { return 1.0 - 5e-4 * static_cast<double>(t); };
    const std::size_t max_steps = 20'000;
    CHECK(recurrence_oracle_flip(stream, max_steps) == 0);

    RelaState state;
    double min_gap_after_warmup = 1e300;
    for (std::size_t t = 1; t <= max_steps; ++t) {
        state = scheduler_step(state, stream(t));
        if (t > 2'000) min_gap_after_warmup = std::min(min_gap_after_warmup,
                                                       state.ell_s - state.ell_f);
    }
    CHECK(state.lambda == 1);
    CHECK(min_gap_after_warmup > 0.01);
    CHECK(-std::log(0.995) == doctest::Approx(0.005012541823544286).epsilon(1e-12));
}

TEST_CASE("scheduler replay reproduces a logged stream exactly") {
    RngStream rng(42);
    std::vector<double> stream;
    for (int t = 0; t < 3000; ++t)
        stream.push_back(std::max(0.0, 1.2 - 4e-4 * t + 0.05 * rng.normal()));

    auto run = [&] {
        RelaState state;
        std::size_t flip = 0;
        for (double ell : stream) {
            const int before = state.lambda;
            state = scheduler_step(state, ell);
            if (before == 1 && state.lambda == 0) flip = state.step;
        }
        return flip;
    };
    const std::size_t first = run();
    CHECK(run() == first);

    RelaState bad;
    CHECK_THROWS_AS(scheduler_step(bad, std::nan("")), std::invalid_argument);
}

TEST_CASE("rela_loss endpoint geometry") {
    const Matrix ident = Matrix::identity(3);
    const Vector zero(3, 0.0);
    const Vector y{1.0, 0.0, 0.0};
    CHECK(rela_loss(Vector{2.0, 0.0, 0.0}, ident, zero, y) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(rela_loss(Vector{-3.0, 0.0, 0.0}, ident, zero, y) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(rela_loss(Vector{0.0, 5.0, 0.0}, ident, zero, y) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(rela_loss(Vector{0.0, 0.0, 0.0}, ident, zero, y), std::invalid_argument);

    // invariance to positive rescaling of y and of W z + b
    RngStream rng(1);
    Matrix w(3, 4);
    for (double& v : w.data()) v = rng.normal();
    Vector b{0.1, -0.2, 0.3};
    Vector z{0.5, 1.5, -0.7, 0.2};
    Vector y2{0.3, -1.0, 0.8};
    const double base = rela_loss(z, w, b, y2);
    Vector y_scaled = y2;
    for (double& v : y_scaled) v *= 42.0;
    CHECK(rela_loss(z, w, b, y_scaled) == doctest::Approx(base).epsilon(1e-12));
    Matrix w_scaled = w;
    for (double& v : w_scaled.data()) v *= 3.0;
    Vector b_scaled = b;
    for (double& v : b_scaled) v *= 3.0;
    CHECK(rela_loss(z, w_scaled, b_scaled, y2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("rela_loss_batch gradients match finite differences") {
    const std::size_t n = 5, zc = 4, m = 3;
    const Matrix z = random_matrix(n, zc, 2);
    const Matrix y = random_matrix(n, m, 3);
    Matrix w = random_matrix(m, zc, 4);
    Vector b{0.2, -0.1, 0.4};

    const RelaLossGrads g = rela_loss_batch(z, w, b, y);

    auto loss_at = [&](const Matrix& zz, const Matrix& ww, const Vector& bb) {
        return rela_loss_batch(zz, ww, bb, y).loss;
    };
    const double eps = 1e-6;
    double max_rel = 0.0;
    {
        Matrix probe = z;
        for (std::size_t i = 0; i < probe.size(); ++i) {
            const double keep = probe.data()[i];
            probe.data()[i] = keep + eps;
            const double hi = loss_at(probe, w, b);
            probe.data()[i] = keep - eps;
            const double lo = loss_at(probe, w, b);
            probe.data()[i] = keep;
            const double fd = (hi - lo) / (2.0 * eps);
            max_rel = std::max(max_rel, std::fabs(g.d_z.data()[i] - fd) /
                                            std::max(std::fabs(fd), 1e-8));
        }
    }
    {
        Matrix probe = w;
        for (std::size_t i = 0; i < probe.size(); ++i) {
            const double keep = probe.data()[i];
            probe.data()[i] = keep + eps;
            const double hi = loss_at(z, probe, b);
            probe.data()[i] = keep - eps;
            const double lo = loss_at(z, probe, b);
            probe.data()[i] = keep;
            const double fd = (hi - lo) / (2.0 * eps);
            max_rel = std::max(max_rel, std::fabs(g.d_w.data()[i] - fd) /
                                            std::max(std::fabs(fd), 1e-8));
        }
    }
    {
        Vector probe = b;
        for (std::size_t i = 0; i < probe.size(); ++i) {
            const double keep = probe[i];
            probe[i] = keep + eps;
            const double hi = loss_at(z, w, probe);
            probe[i] = keep - eps;
            const double lo = loss_at(z, w, probe);
            probe[i] = keep;
            const double fd = (hi - lo) / (2.0 * eps);
            max_rel = std::max(max_rel, std::fabs(g.d_b[i] - fd) / std::max(std::fabs(fd), 1e-8));
        }
    }
    CHECK(max_rel <= 1e-5);
}

TEST_CASE("combined_loss evaluates exactly one branch") {
    RelaState state;
    int rela_calls = 0, ssl_calls = 0;
    auto rela_fn = [&] {
        ++rela_calls;
        return 0.75;
    };
    auto ssl_fn = [&] {
        ++ssl_calls;
        return 0.25;
    };

    state.lambda = 1;
    CHECK(combined_loss(state, rela_fn, ssl_fn) == 0.75);
    CHECK(rela_calls == 1);
    CHECK(ssl_calls == 0);

    state.lambda = 0;
    CHECK(combined_loss(state, rela_fn, ssl_fn) == 0.25);
    CHECK(rela_calls == 1);
    CHECK(ssl_calls == 1);

    // equals lambda * rela + (1 - lambda) * ssl for both settings
    for (int lambda : {0, 1}) {
        state.lambda = lambda;
        CHECK(combined_loss(state, rela_fn, ssl_fn) ==
              lambda * 0.75 + (1 - lambda) * 0.25);
    }
    state.lambda = 2;
    CHECK_THROWS_AS(combined_loss(state, rela_fn, ssl_fn), std::invalid_argument);
}

TEST_CASE("train_rela with zero epochs records exactly the initial loss") {
    const Matrix samples = random_matrix(32, 4, 5);
    RngStream prior_rng(6);
    const Mlp prior_net = Mlp::init({4, 8, 3}, prior_rng);
    const Matrix targets = prior_net.forward(samples);
    const TargetStore store = TargetStore::from_matrix(targets, "mlp", 0);

    RngStream init_rng(7);
    Mlp encoder = Mlp::init({4, 8, 3}, init_rng);
    TrainConfig cfg;
    cfg.epochs = 0;
    RngStream rng(8);
    const TrainResult result = train_rela(std::move(encoder), samples, store, cfg, rng);
    CHECK(result.log.records.size() == 1);
    CHECK(result.log.records[0].loss > 0.0);
    CHECK(result.log.records[0].phase == "rela");
}

TEST_CASE("train_rela identity setup starts at zero loss") {
    Matrix samples = random_matrix(16, 3, 9);
    // snap to multiples of 1/256 so the float32 store payload is lossless
    for (double& v : samples.data()) v = std::round(v * 256.0) / 256.0;
    const TargetStore store = TargetStore::from_matrix(samples, "identity", 0);

    RngStream init_rng(10);
    Mlp encoder = Mlp::init({3, 3}, init_rng);  // single linear layer
    Vector flat;
    encoder.to_flat(flat);
    std::fill(flat.begin(), flat.end(), 0.0);
    // weight = identity, bias = 0
    for (std::size_t i = 0; i < 3; ++i) flat[i * 3 + i] = 1.0;
    encoder.from_flat(flat);

    TrainConfig cfg;
    cfg.epochs = 0;
    RngStream rng(11);
    const TrainResult result = train_rela(std::move(encoder), samples, store, cfg, rng);
    CHECK(result.log.records[0].loss <= 1e-12);
}

TEST_CASE("train_rela lambda is nonincreasing and phases partition the log") {
    const Matrix samples = random_matrix(64, 4, 12);
    const TargetStore store = TargetStore::from_matrix(samples, "identity", 0);
    RngStream init_rng(13);
    Mlp encoder = Mlp::init({4, 16, 4}, init_rng);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 16;
    cfg.aug_std = 0.05;
    RngStream rng(14);
    const TrainResult result = train_rela(std::move(encoder), samples, store, cfg, rng);

    int prev_lambda = 1;
    for (const RunRecord& rec : result.log.records) {
        CHECK(rec.lambda <= prev_lambda);
        CHECK((rec.lambda == 0 || rec.lambda == 1));
        CHECK((rec.phase == "rela" || rec.phase == "ssl"));
        prev_lambda = rec.lambda;
    }
}

TEST_CASE("train_rela is deterministic given the seed") {
    const Matrix samples = random_matrix(48, 4, 15);
    RngStream prior_rng(16);
    const Mlp prior_net = Mlp::init({4, 8, 4}, prior_rng);
    const TargetStore store =
        TargetStore::from_matrix(prior_net.forward(samples), "mlp", 0);

    auto run = [&] {
        RngStream init_rng(17);
        Mlp encoder = Mlp::init({4, 12, 4}, init_rng);
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.batch_size = 16;
        RngStream rng(18);
        TrainResult r = train_rela(std::move(encoder), samples, store, cfg, rng);
        Vector flat;
        r.encoder.to_flat(flat);
        return flat;
    };
    CHECK(run() == run());
}

TEST_CASE("train_rela aborts on non-finite loss with the step index") {
    Matrix samples = random_matrix(16, 3, 19);
    samples(0, 0) = 1e308;  // overflows the first forward pass
    const TargetStore store = TargetStore::from_matrix(random_matrix(16, 3, 20), "x", 0);
    RngStream init_rng(21);
    Mlp encoder = Mlp::init({3, 3}, init_rng);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    RngStream rng(22);
    CHECK_THROWS_WITH_AS(
        (void)train_rela(std::move(encoder), samples, store, cfg, rng),
        doctest::Contains("step"), std::runtime_error);
}

TEST_CASE("train_rela rejects a store with the wrong row count") {
    const Matrix samples = random_matrix(16, 3, 23);
    const TargetStore store = TargetStore::from_matrix(random_matrix(8, 3, 24), "x", 0);
    RngStream init_rng(25);
    Mlp encoder = Mlp::init({3, 3}, init_rng);
    TrainConfig cfg;
    RngStream rng(26);
    CHECK_THROWS_AS((void)train_rela(std::move(encoder), samples, store, cfg, rng),
                    std::invalid_argument);
}
