#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rela/data_factory.hpp"

using namespace rela;
namespace fs = std::filesystem;

namespace {

struct ConstPrior final : PriorModel {
    std::size_t in_dim, out_dim;
    double value;
    ConstPrior(std::size_t in, std::size_t out, double v) : in_dim(in), out_dim(out), value(v) {}
    std::string id() const override { return "const"; }
    std::size_t output_dim() const override { return out_dim; }
    Matrix forward(const Matrix& x) const override {
        if (x.cols() != in_dim) throw std::invalid_argument("ConstPrior: dim mismatch");
        return Matrix(x.rows(), out_dim, value);
    }
};

struct CountingPrior final : PriorModel {
    const PriorModel& inner;
    mutable std::atomic<std::size_t> calls{0};
    mutable std::atomic<std::size_t> rows_seen{0};
    explicit CountingPrior(const PriorModel& p) : inner(p) {}
    std::string id() const override { return inner.id(); }
    std::size_t output_dim() const override { return inner.output_dim(); }
    Matrix forward(const Matrix& x) const override {
        calls.fetch_add(1);
        rows_seen.fetch_add(x.rows());
        return inner.forward(x);
    }
};

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    RngStream rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

ImageTensor random_image(std::size_t c, std::size_t h, std::size_t w, RngStream& rng) {
    ImageTensor img;
    img.channels = c;
    img.height = h;
    img.width = w;
    img.pixels.resize(c * h * w);
    for (double& v : img.pixels) v = rng.uniform();
    return img;
}

std::string temp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("generate_targets with the identity prior returns the input") {
    const Matrix x = random_matrix(20, 5, 1);
    IdentityPrior prior(5);
    const Matrix before = x;
    const Matrix r = generate_targets(prior, x);
    CHECK(r == x);
    CHECK(x == before);  // input never mutated
}

TEST_CASE("generate_targets with a constant prior yields identical rows") {
    const Matrix x = random_matrix(16, 3, 2);
    ConstPrior prior(3, 4, 0.25);
    const Matrix r = generate_targets(prior, x);
    for (std::size_t i = 0; i < r.rows(); ++i)
        for (std::size_t j = 0; j < r.cols(); ++j) CHECK(r(i, j) == 0.25);
}

TEST_CASE("generate_targets is deterministic for a fixed-seed mlp prior") {
    const Matrix x = random_matrix(64, 6, 3);
    RngStream init1(9), init2(9);
    MlpPrior p1(Mlp::init({6, 16, 4}, init1), "mlp");
    MlpPrior p2(Mlp::init({6, 16, 4}, init2), "mlp");
    const Matrix a = generate_targets(p1, x);
    const Matrix b = generate_targets(p2, x);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("generate_targets single pass and sharded row coverage") {
    const Matrix x = random_matrix(40, 3, 4);
    ConstPrior base(3, 2, 1.0);
    CountingPrior counting(base);
    (void)generate_targets(counting, x, 1);
    CHECK(counting.calls.load() == 1);
    CHECK(counting.rows_seen.load() == x.rows());

    CountingPrior sharded(base);
    IdentityPrior ident(3);
    CountingPrior counting_ident(ident);
    const Matrix serial = generate_targets(counting_ident, x, 1);
    const Matrix parallel = generate_targets(counting_ident, x, 4);
    CHECK(serial == parallel);  // row order independent of scheduling
}

TEST_CASE("mixture posterior prior tracks the bayes rule") {
    MixtureSpec spec;
    spec.dim = 1;
    MixturePosteriorPrior prior(spec);
    Matrix x(3, 1, {1.0, 1.5, 2.0});
    const Matrix post = prior.forward(x);
    CHECK(post(0, 1) < 0.5);                       // near mu1: class 0
    CHECK(post(1, 1) == doctest::Approx(0.5));     // the boundary
    CHECK(post(2, 1) > 0.5);                       // near mu2: class 1
    for (std::size_t i = 0; i < 3; ++i) CHECK(post(i, 0) + post(i, 1) == doctest::Approx(1.0));
}

TEST_CASE("weak_augment identity and mirror cases") {
    RngStream rng(5);
    const ImageTensor img = random_image(3, 9, 7, rng);

    RngStream a(6);
    const ImageTensor same = weak_augment(img, a, 1.0, 0.0, 1.0, 1.0);
    CHECK(same.pixels == img.pixels);

    RngStream b(7);
    const ImageTensor flipped = weak_augment(img, b, 1.0, 1.0, 1.0, 1.0);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < img.height; ++i)
            for (std::size_t j = 0; j < img.width; ++j)
                CHECK(flipped.at(c, i, j) == img.at(c, i, img.width - 1 - j));

    RngStream c(8);
    CHECK_THROWS_AS(weak_augment(img, c, 0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(weak_augment(img, c, 0.5, 1.5), std::invalid_argument);
}

TEST_CASE("weak_augment preserves the pixel range and the shape") {
    RngStream rng(9);
    const ImageTensor img = random_image(1, 8, 8, rng);
    for (int i = 0; i < 1000; ++i) {
        const ImageTensor out = weak_augment(img, rng);
        CHECK(out.height == img.height);
        CHECK(out.width == img.width);
        for (double v : out.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("target store round-trip is the identity on bytes") {
    const Matrix m = random_matrix(100, 16, 10);
    PcaModel pca;
    pca.mean = Vector{1.0, 2.0};
    pca.eigenvalues = Vector{3.5, 0.25};
    pca.components = Matrix(2, 2, {1, 0, 0, 1});
    const TargetStore store = TargetStore::from_matrix(m, "identity", 1234, pca);

    const std::string path = temp_path("store_roundtrip.bin");
    save_target_store(store, path);
    const TargetStore loaded = load_target_store(path);
    CHECK(loaded.rows == store.rows);
    CHECK(loaded.cols == store.cols);
    CHECK(loaded.prior_id == store.prior_id);
    CHECK(loaded.seed == store.seed);
    REQUIRE(loaded.payload.size() == store.payload.size());
    CHECK(std::memcmp(loaded.payload.data(), store.payload.data(),
                      store.payload.size() * sizeof(float)) == 0);
    REQUIRE(loaded.pca.has_value());
    CHECK(loaded.pca->mean == pca.mean);
    CHECK(loaded.pca->eigenvalues == pca.eigenvalues);
    CHECK(loaded.pca->components == pca.components);

    // saving the loaded store reproduces the file byte for byte
    const std::string path2 = temp_path("store_roundtrip2.bin");
    save_target_store(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
    const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(bytes1 == bytes2);
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("target store corruption is reported distinctly") {
    const Matrix m = random_matrix(10, 4, 11);
    const TargetStore store = TargetStore::from_matrix(m, "p", 7);
    const std::string path = temp_path("store_corrupt.bin");
    save_target_store(store, path);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();

    SUBCASE("truncated payload") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
        out.close();
        try {
            (void)load_target_store(path);
            FAIL("expected StoreError");
        } catch (const StoreError& e) {
            CHECK(e.kind() == StoreErrorKind::truncated);
        }
    }
    SUBCASE("bad magic") {
        bytes[0] = 'X';
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        try {
            (void)load_target_store(path);
            FAIL("expected StoreError");
        } catch (const StoreError& e) {
            CHECK(e.kind() == StoreErrorKind::corrupt_header);
        }
    }
    SUBCASE("version mismatch") {
        bytes[4] = 99;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        try {
            (void)load_target_store(path);
            FAIL("expected StoreError");
        } catch (const StoreError& e) {
            CHECK(e.kind() == StoreErrorKind::version_mismatch);
        }
    }
    SUBCASE("trailing bytes break the row/col integrity") {
        bytes.push_back('\0');
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        try {
            (void)load_target_store(path);
            FAIL("expected StoreError");
        } catch (const StoreError& e) {
            CHECK(e.kind() == StoreErrorKind::integrity);
        }
    }
    fs::remove(path);
}

TEST_CASE("overlap_paper formula values and slope") {
    // delta_mu -> 0+ drives the overlap expression to zero
    CHECK(overlap_paper(1e-12, 0.25, 1.0, 0.0) == doctest::Approx(0.0).epsilon(1e-6));
    // evaluation against the cdf
    CHECK(overlap_paper(1.0, 0.25, 1.0, 0.0) ==
          doctest::Approx(2.0 * std_normal_cdf(std::sqrt(2.0)) - 1.0).epsilon(1e-14));
    CHECK(overlap_paper(1.0, 0.25, 1.0, 0.0) == doctest::Approx(0.8427007929497149).epsilon(1e-9));
    // strictly decreasing in alpha at fixed delta_mu, sigma2, k > 0
    double prev = 2.0;
    for (double alpha : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const double v = overlap_paper(1.0, 0.25, 1.0, alpha);
        CHECK(v < prev);
        prev = v;
    }
    CHECK_THROWS_AS(overlap_paper(-1.0, 0.25, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("overlap_mc against the closed form") {
    RngStream rng(12);
    CHECK(overlap_mc(0.0, 0.0, 1.0, 20'000, rng) == doctest::Approx(1.0).epsilon(0.01));

    RngStream rng2(13);
    const double est = overlap_mc(0.0, 1.0, 0.5, 400'000, rng2);
    CHECK(std::fabs(est - 2.0 * std_normal_cdf(-1.0)) < 0.005);

    RngStream rng3(14);
    CHECK(overlap_mc(0.0, 10.0, 0.5, 20'000, rng3) <= 1e-3);

    RngStream rng4(15);
    CHECK_THROWS_AS(overlap_mc(0.0, 1.0, 0.5, 100, rng4), std::invalid_argument);
}

TEST_CASE("overlap_mc is monotone in the augmentation std") {
    double prev = -1.0, prev_se = 0.0;
    std::uint64_t stream = 0;
    for (double sigma : {0.25, 0.5, 1.0, 2.0}) {
        RngStream rng(16, stream++);
        const OverlapEstimate est = overlap_mc_with_error(0.0, 1.0, sigma, 200'000, rng);
        CHECK(est.value > prev - (est.std_error + prev_se));
        prev = est.value;
        prev_se = est.std_error;
    }
}
