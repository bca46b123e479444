#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rela/case_study.hpp"
#include "rela/core_math.hpp"
#include "rela/data_factory.hpp"
#include "rela/eval.hpp"
#include "rela/mlp.hpp"
#include "rela/pca.hpp"
#include "rela/rela_train.hpp"
#include "rela/ssl_zoo.hpp"

namespace py = pybind11;
using namespace rela;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    Matrix m(static_cast<std::size_t>(arr.shape(0)), static_cast<std::size_t>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + arr.size(), m.data().begin());
    return m;
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> arr({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), arr.mutable_data());
    return arr;
}

py::array_t<double> from_vector(const Vector& v) {
    py::array_t<double> arr(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), arr.mutable_data());
    return arr;
}

using NpMatrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

MixtureSpec spec_from_args(double mu1, double mu2, double sigma, std::size_t dim) {
    MixtureSpec spec;
    spec.mu1 = mu1;
    spec.mu2 = mu2;
    spec.sigma = sigma;
    spec.dim = dim;
    return spec;
}

py::dict pca_model_dict(const PcaModel& model) {
    py::dict d;
    d["mean"] = from_vector(model.mean);
    d["eigenvalues"] = from_vector(model.eigenvalues);
    d["components"] = from_matrix(model.components);
    if (model.col_std) d["col_std"] = from_vector(*model.col_std);
    return d;
}

}  // namespace

PYBIND11_MODULE(_rela, m) {
    m.doc() = "Native core of the rela toolkit";

    py::class_<RngStream>(m, "RngStream")
        .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream") = 0)
        .def("uniform", &RngStream::uniform)
        .def("normal", &RngStream::normal)
        .def("substream", &RngStream::substream);

    m.def(
        "sample_gaussian",
        [](RngStream& rng, double mean, double std, std::size_t n) {
            return from_vector(sample_gaussian(rng, mean, std, n));
        },
        py::arg("rng"), py::arg("mean"), py::arg("std"), py::arg("n"));
    m.def(
        "sample_generalized_gaussian",
        [](RngStream& rng, double mu, double alpha, double beta, std::size_t n) {
            return from_vector(sample_generalized_gaussian(rng, mu, alpha, beta, n));
        },
        py::arg("rng"), py::arg("mu"), py::arg("alpha"), py::arg("beta"), py::arg("n"));
    m.def("std_normal_cdf", &std_normal_cdf, py::arg("z"));
    m.def("generalized_gaussian_variance", &generalized_gaussian_variance, py::arg("alpha"),
          py::arg("beta"));
    m.def(
        "eig_symmetric",
        [](const NpMatrix& a, double tol) {
            const EigResult r = eig_symmetric(to_matrix(a), tol);
            return py::make_tuple(from_vector(r.eigenvalues), from_matrix(r.eigenvectors));
        },
        py::arg("a"), py::arg("tol") = 1e-9);

    m.def(
        "full_pca",
        [](const NpMatrix& y, std::size_t k) {
            const PcaResult r = full_pca(to_matrix(y), k);
            return py::make_tuple(pca_model_dict(r.model), from_matrix(r.reduced));
        },
        py::arg("y"), py::arg("k"));
    m.def(
        "batch_pca",
        [](const NpMatrix& y, std::size_t k, std::size_t batch_size) {
            const PcaResult r = batch_pca(to_matrix(y), k, batch_size);
            return py::make_tuple(pca_model_dict(r.model), from_matrix(r.reduced));
        },
        py::arg("y"), py::arg("k"), py::arg("batch_size"));
    m.def(
        "reduce_targets",
        [](const NpMatrix& y, std::size_t n_components, bool standardize) {
            const ReduceResult r = reduce_targets(to_matrix(y), n_components, standardize);
            return py::make_tuple(pca_model_dict(r.model), from_matrix(r.reduced),
                                  r.dropped_columns);
        },
        py::arg("targets"), py::arg("n_components"), py::arg("standardize") = false);

    m.def(
        "make_mixture",
        [](double mu1, double mu2, double sigma, std::size_t dim, std::size_t n, RngStream& rng) {
            const LabeledSet set = make_mixture(spec_from_args(mu1, mu2, sigma, dim), n, rng);
            return py::make_tuple(from_matrix(set.x), from_vector(set.y));
        },
        py::arg("mu1"), py::arg("mu2"), py::arg("sigma"), py::arg("dim"), py::arg("n"),
        py::arg("rng"));
    m.def("bayes_boundary", [](double mu1, double mu2, double sigma, std::size_t dim) {
        return bayes_boundary(spec_from_args(mu1, mu2, sigma, dim));
    });
    m.def(
        "linear_1d_sgd",
        [](double mu1, double mu2, double alpha, double beta, double eta, std::size_t steps,
           double theta0, double rho, RngStream& rng) {
            return from_vector(
                linear_1d_sgd(mu1, mu2, alpha, beta, eta, steps, theta0, rho, rng));
        },
        py::arg("mu1"), py::arg("mu2"), py::arg("alpha"), py::arg("beta"), py::arg("eta"),
        py::arg("steps"), py::arg("theta0"), py::arg("rho") = 0.0, py::arg("rng"));
    m.def("closed_form_gap", &closed_form_gap, py::arg("mu1"), py::arg("mu2"), py::arg("alpha"),
          py::arg("beta"), py::arg("eta"), py::arg("t"), py::arg("theta0"));

    m.def(
        "infonce_loss",
        [](const NpMatrix& u1, const NpMatrix& u2, double tau) {
            return infonce_loss(EmbeddingBatch{to_matrix(u1), to_matrix(u2), std::nullopt}, tau);
        },
        py::arg("u1"), py::arg("u2"), py::arg("tau"));
    m.def(
        "infonce_grad",
        [](const NpMatrix& u1, const NpMatrix& u2, double tau) {
            return from_matrix(
                infonce_grad(EmbeddingBatch{to_matrix(u1), to_matrix(u2), std::nullopt}, tau));
        },
        py::arg("u1"), py::arg("u2"), py::arg("tau"));
    m.def(
        "byol_loss",
        [](const NpMatrix& online, const NpMatrix& target, const NpMatrix& w,
           const std::vector<double>& b) {
            return byol_loss(to_matrix(online), to_matrix(target), to_matrix(w), b);
        },
        py::arg("online"), py::arg("target"), py::arg("predictor_w"), py::arg("predictor_b"));
    m.def(
        "barlow_loss",
        [](const NpMatrix& z1, const NpMatrix& z2, double lambda_bt) {
            return barlow_loss(to_matrix(z1), to_matrix(z2), lambda_bt);
        },
        py::arg("z1"), py::arg("z2"), py::arg("lambda_bt"));
    m.def(
        "barlow_grad",
        [](const NpMatrix& z1, const NpMatrix& z2, double lambda_bt) {
            return from_matrix(barlow_grad(to_matrix(z1), to_matrix(z2), lambda_bt));
        },
        py::arg("z1"), py::arg("z2"), py::arg("lambda_bt"));

    py::class_<RelaState>(m, "RelaState")
        .def(py::init<>())
        .def_readwrite("lam", &RelaState::lambda)
        .def_readwrite("ell_s", &RelaState::ell_s)
        .def_readwrite("ell_f", &RelaState::ell_f)
        .def_readwrite("step", &RelaState::step);
    m.def("scheduler_step", [](const RelaState& state, double ell_c) {
        return scheduler_step(state, ell_c);
    });
    m.def(
        "rela_loss",
        [](const std::vector<double>& z, const NpMatrix& w, const std::vector<double>& b,
           const std::vector<double>& y) { return rela_loss(z, to_matrix(w), b, y); },
        py::arg("z"), py::arg("w"), py::arg("b"), py::arg("y"));

    m.def("overlap_paper", &overlap_paper, py::arg("delta_mu"), py::arg("sigma2"), py::arg("k"),
          py::arg("alpha"));
    m.def(
        "overlap_mc",
        [](double mu1, double mu2, double sigma_aug, std::size_t n, RngStream& rng) {
            return overlap_mc(mu1, mu2, sigma_aug, n, rng);
        },
        py::arg("mu1"), py::arg("mu2"), py::arg("sigma_aug"), py::arg("n"), py::arg("rng"));
    m.def("tv_gaussian_1d", &tv_gaussian_1d, py::arg("mu1"), py::arg("sigma1"), py::arg("mu2"),
          py::arg("sigma2"));

    m.def(
        "linear_probe",
        [](const NpMatrix& features, const std::vector<int>& labels, std::size_t epochs,
           std::size_t batch_size, double learning_rate, std::uint64_t seed) {
            ProbeConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.learning_rate = learning_rate;
            RngStream rng(seed, 0);
            return linear_probe(to_matrix(features), labels, cfg, rng);
        },
        py::arg("features"), py::arg("labels"), py::arg("epochs") = 100,
        py::arg("batch_size") = 128, py::arg("learning_rate") = 3e-4, py::arg("seed") = 0);
    m.def(
        "rep_distance",
        [](const NpMatrix& f_s, const NpMatrix& f_t, double mismatch_threshold, bool categorical,
           std::uint64_t seed) {
            DistanceConfig cfg;
            cfg.mismatch_threshold = mismatch_threshold;
            cfg.categorical = categorical;
            cfg.seed = seed;
            return rep_distance_features(to_matrix(f_s), to_matrix(f_t), cfg).value;
        },
        py::arg("features_source"), py::arg("features_target"),
        py::arg("mismatch_threshold") = 0.05, py::arg("categorical") = false, py::arg("seed") = 0);

    m.def(
        "save_target_store",
        [](const NpMatrix& targets, const std::string& prior_id, std::uint64_t seed,
           const std::string& path) {
            save_target_store(TargetStore::from_matrix(to_matrix(targets), prior_id, seed), path);
        },
        py::arg("targets"), py::arg("prior_id"), py::arg("seed"), py::arg("path"));
    m.def(
        "load_target_store",
        [](const std::string& path) {
            const TargetStore store = load_target_store(path);
            py::dict header;
            header["rows"] = store.rows;
            header["cols"] = store.cols;
            header["prior_id"] = store.prior_id;
            header["seed"] = store.seed;
            header["has_pca"] = store.pca.has_value();
            return py::make_tuple(header, from_matrix(store.to_matrix()));
        },
        py::arg("path"));

    m.def(
        "train_rela",
        [](const NpMatrix& samples, const NpMatrix& targets, std::vector<std::size_t> hidden,
           std::size_t encoder_out, std::size_t epochs, std::size_t batch_size,
           double learning_rate, const std::string& ssl_method, double aug_std,
           bool rela_enabled, std::uint64_t seed) {
            const Matrix x = to_matrix(samples);
            std::vector<std::size_t> sizes{x.cols()};
            sizes.insert(sizes.end(), hidden.begin(), hidden.end());
            sizes.push_back(encoder_out);
            RngStream init_rng(seed, 1);
            Mlp encoder = Mlp::init(sizes, init_rng);
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.learning_rate = learning_rate;
            cfg.ssl.method = ssl_method_from_string(ssl_method);
            cfg.aug_std = aug_std;
            cfg.rela_enabled = rela_enabled;
            cfg.seed = seed;
            RngStream rng(seed, 2);
            const TargetStore store = TargetStore::from_matrix(to_matrix(targets), "inline", seed);
            TrainResult result = train_rela(std::move(encoder), x, store, cfg, rng);
            py::dict out;
            out["features"] = from_matrix(result.encoder.forward(x));
            out["flip_step"] =
                result.log.flip_step ? py::cast(*result.log.flip_step) : py::none();
            out["final_loss"] = result.log.records.back().loss;
            out["steps"] = result.state.step;
            return out;
        },
        py::arg("samples"), py::arg("targets"), py::arg("hidden"), py::arg("encoder_out"),
        py::arg("epochs"), py::arg("batch_size") = 128, py::arg("learning_rate") = 1e-3,
        py::arg("ssl_method") = "byol", py::arg("aug_std") = 0.1, py::arg("rela_enabled") = true,
        py::arg("seed") = 0);
}
