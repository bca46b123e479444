#include "rela/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "rela/case_study.hpp"
#include "rela/core_math.hpp"
#include "rela/data_factory.hpp"
#include "rela/eval.hpp"
#include "rela/mlp.hpp"
#include "rela/pca.hpp"
#include "rela/rela_train.hpp"
#include "rela/ssl_zoo.hpp"

namespace rela::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open for writing: " + tmp);
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw std::runtime_error("write failed: " + tmp);
    }
    fs::rename(tmp, path);
}

namespace {

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    static const char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

enum class Kind { number, boolean, string, array, object };

Kind kind_of(const json& j) {
    if (j.is_number()) return Kind::number;
    if (j.is_boolean()) return Kind::boolean;
    if (j.is_string()) return Kind::string;
    if (j.is_array()) return Kind::array;
    if (j.is_object()) return Kind::object;
    throw std::invalid_argument("config: unsupported value type");
}

void merge_into(json& base, const json& user, const std::string& prefix) {
    for (const auto& [key, value] : user.items()) {
        if (!base.contains(key))
            throw std::invalid_argument("config: unknown key '" + prefix + key + "'");
        json& slot = base[key];
        if (kind_of(slot) != kind_of(value))
            throw std::invalid_argument("config: wrong type for key '" + prefix + key + "'");
        if (slot.is_object())
            merge_into(slot, value, prefix + key + ".");
        else
            slot = value;
    }
}

std::string csv_cell(double v) { return format_double(v); }

struct CsvBuilder {
    std::string text;
    void header(std::string_view h) {
        text.append(h);
        text.push_back('\n');
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text.push_back(',');
            text.append(cells[i]);
        }
        text.push_back('\n');
    }
};

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

std::string trajectory_csv(const Trajectory& traj) {
    CsvBuilder csv;
    csv.header("step,train_mse,val_mse");
    for (const auto& rec : traj)
        csv.row({std::to_string(rec.step), csv_cell(rec.train_mse), csv_cell(rec.val_mse)});
    return csv.text;
}

// ---------------------------------------------------------------------------
// case-sigma / case-rho
// ---------------------------------------------------------------------------

SgdConfig sgd_from_json(const json& cfg) {
    SgdConfig sgd;
    sgd.steps = cfg.at("steps").get<std::size_t>();
    sgd.batch_size = cfg.at("batch_size").get<std::size_t>();
    sgd.learning_rate = cfg.at("learning_rate").get<double>();
    sgd.momentum = cfg.at("momentum").get<double>();
    return sgd;
}

void cmd_case_sigma(const json& cfg, const CliOptions& opts, const fs::path& dir) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const auto sigma_grid = cfg.at("sigma_grid").get<std::vector<double>>();
    const std::size_t n_seeds = cfg.at("seeds").get<std::size_t>();
    const std::size_t dim = cfg.at("dim").get<std::size_t>();
    const std::size_t train_n = cfg.at("train_n").get<std::size_t>();
    const std::size_t val_n = cfg.at("val_n").get<std::size_t>();
    const double threshold = cfg.at("mse_threshold").get<double>();
    const SgdConfig sgd = sgd_from_json(cfg);

    MixtureSpec original;
    original.dim = dim;
    RngStream val_rng(seed, 1'000'000);
    const LabeledSet val = make_mixture(original, val_n, val_rng);

    const std::size_t jobs = sigma_grid.size() * n_seeds;
    std::vector<Trajectory> trajectories(jobs);
    parallel_for(jobs, opts.threads, [&](std::size_t job) {
        const std::size_t si = job / n_seeds;
        MixtureSpec spec = original;
        spec.sigma = sigma_grid[si];
        RngStream rng(seed, 1 + job);
        const LabeledSet train = make_mixture(spec, train_n, rng);
        trajectories[job] = train_tiny(train, val, sgd, rng).second;
    });

    json per_sigma = json::array();
    std::vector<double> medians_final, medians_steps;
    for (std::size_t si = 0; si < sigma_grid.size(); ++si) {
        std::vector<double> finals, steps;
        for (std::size_t trial = 0; trial < n_seeds; ++trial) {
            const Trajectory& traj = trajectories[si * n_seeds + trial];
            finals.push_back(traj.back().val_mse);
            steps.push_back(steps_to_threshold(traj, threshold));
            const std::string name = "traj_sigma" + format_double(sigma_grid[si]) + "_seed" +
                                     std::to_string(trial) + ".csv";
            write_file_atomic((dir / name).string(), trajectory_csv(traj));
        }
        json entry;
        entry["sigma"] = sigma_grid[si];
        entry["median_final_val_mse"] = median(finals);
        entry["median_steps_to_threshold"] = finite_or_null(median(steps));
        per_sigma.push_back(entry);
        medians_final.push_back(median(finals));
        medians_steps.push_back(median(steps));
    }
    bool mono_final = true, mono_steps = true;
    for (std::size_t i = 1; i < medians_final.size(); ++i) {
        if (medians_final[i] < medians_final[i - 1]) mono_final = false;
        if (medians_steps[i] < medians_steps[i - 1]) mono_steps = false;
    }
    json summary;
    summary["command"] = "case-sigma";
    summary["seed"] = seed;
    summary["per_sigma"] = per_sigma;
    summary["final_mse_nondecreasing"] = mono_final;
    summary["steps_to_threshold_nondecreasing"] = mono_steps;
    write_file_atomic((dir / "summary.json").string(), dump_json(summary));
}

void cmd_case_rho(const json& cfg, const CliOptions& opts, const fs::path& dir) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const auto rho_grid = cfg.at("rho_grid").get<std::vector<double>>();
    const std::size_t n_seeds = cfg.at("seeds").get<std::size_t>();
    const std::size_t dim = cfg.at("dim").get<std::size_t>();
    const double sigma = cfg.at("sigma").get<double>();
    const double prior_sigma = cfg.at("prior_sigma").get<double>();
    const std::size_t train_n = cfg.at("train_n").get<std::size_t>();
    const std::size_t val_n = cfg.at("val_n").get<std::size_t>();
    const double threshold = cfg.at("mse_threshold").get<double>();
    const SgdConfig sgd = sgd_from_json(cfg);

    MixtureSpec original;
    original.dim = dim;
    RngStream val_rng(seed, 2'000'001);
    const LabeledSet val = make_mixture(original, val_n, val_rng);

    // the strong prior: a net trained on the low-variance mixture
    MixtureSpec prior_spec = original;
    prior_spec.sigma = prior_sigma;
    RngStream prior_rng(seed, 2'000'000);
    const LabeledSet prior_train = make_mixture(prior_spec, train_n, prior_rng);
    const TinyNet prior = train_tiny(prior_train, val, sgd, prior_rng).first;

    MixtureSpec spec = original;
    spec.sigma = sigma;

    const std::size_t jobs = rho_grid.size() * n_seeds;
    std::vector<Trajectory> trajectories(jobs);
    parallel_for(jobs, opts.threads, [&](std::size_t job) {
        const std::size_t ri = job / n_seeds;
        RngStream rng(seed, 1 + job);
        LabeledSet train = make_mixture(spec, train_n, rng);
        train = relabel(train, rho_grid[ri], prior);
        trajectories[job] = train_tiny(train, val, sgd, rng).second;
    });

    json per_rho = json::array();
    std::vector<double> medians_steps;
    for (std::size_t ri = 0; ri < rho_grid.size(); ++ri) {
        std::vector<double> steps, finals;
        for (std::size_t trial = 0; trial < n_seeds; ++trial) {
            const Trajectory& traj = trajectories[ri * n_seeds + trial];
            finals.push_back(traj.back().val_mse);
            steps.push_back(steps_to_threshold(traj, threshold));
            const std::string name = "traj_rho" + format_double(rho_grid[ri]) + "_seed" +
                                     std::to_string(trial) + ".csv";
            write_file_atomic((dir / name).string(), trajectory_csv(traj));
        }
        json entry;
        entry["rho"] = rho_grid[ri];
        entry["median_final_val_mse"] = median(finals);
        entry["median_steps_to_threshold"] = finite_or_null(median(steps));
        per_rho.push_back(entry);
        medians_steps.push_back(median(steps));
    }
    bool mono = true;
    for (std::size_t i = 1; i < medians_steps.size(); ++i)
        if (medians_steps[i] > medians_steps[i - 1]) mono = false;
    json summary;
    summary["command"] = "case-rho";
    summary["seed"] = seed;
    summary["per_rho"] = per_rho;
    summary["steps_to_threshold_nonincreasing"] = mono;
    write_file_atomic((dir / "summary.json").string(), dump_json(summary));
}

// ---------------------------------------------------------------------------
// pca-verify
// ---------------------------------------------------------------------------

double reduced_deviation(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
    double dev = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        // per-column sign alignment
        double corr = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) corr += a(i, j) * b(i, j);
        const double s = corr < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < a.rows(); ++i)
            dev = std::max(dev, std::fabs(a(i, j) - s * b(i, j)));
    }
    return dev;
}

void cmd_pca_verify(const json& cfg, const CliOptions& opts, const fs::path& dir) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const std::size_t n_matrices = cfg.at("n_matrices").get<std::size_t>();
    const std::size_t max_rows = cfg.at("max_rows").get<std::size_t>();
    const std::size_t max_cols = cfg.at("max_cols").get<std::size_t>();
    const std::size_t k_max = cfg.at("k_max").get<std::size_t>();
    const auto batch_sizes = cfg.at("batch_sizes").get<std::vector<std::size_t>>();

    struct Row {
        std::size_t rows, cols, k, batch;
        double deviation;
    };
    std::vector<std::vector<Row>> results(n_matrices);
    parallel_for(n_matrices, opts.threads, [&](std::size_t i) {
        RngStream rng(seed, 3'000'000 + i);
        const std::size_t rows = 16 + rng.uniform_int(max_rows - 15);
        const std::size_t cols = 4 + rng.uniform_int(max_cols - 3);
        const std::size_t k = 1 + rng.uniform_int(std::min(k_max, cols));
        Matrix y(rows, cols);
        for (double& v : y.data()) v = rng.normal();
        const PcaResult full = full_pca(y, k);
        for (const std::size_t raw_batch : batch_sizes) {
            const std::size_t batch = raw_batch == 0 ? rows : raw_batch;
            const PcaResult batched = batch_pca(y, k, batch);
            results[i].push_back(
                {rows, cols, k, batch, reduced_deviation(full.reduced, batched.reduced)});
        }
    });

    CsvBuilder csv;
    csv.header("matrix,rows,cols,k,batch_size,max_abs_deviation");
    double worst = 0.0;
    for (std::size_t i = 0; i < n_matrices; ++i)
        for (const Row& r : results[i]) {
            worst = std::max(worst, r.deviation);
            csv.row({std::to_string(i), std::to_string(r.rows), std::to_string(r.cols),
                     std::to_string(r.k), std::to_string(r.batch), csv_cell(r.deviation)});
        }
    write_file_atomic((dir / "deviations.csv").string(), csv.text);

    json summary;
    summary["command"] = "pca-verify";
    summary["seed"] = seed;
    summary["max_abs_deviation"] = worst;
    summary["pass"] = worst <= 1e-8;
    write_file_atomic((dir / "summary.json").string(), dump_json(summary));
}

// ---------------------------------------------------------------------------
// grad-check
// ---------------------------------------------------------------------------

double norm_rel_error(const Matrix& analytic, const Matrix& fd) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double d = analytic.data()[i] - fd.data()[i];
        num += d * d;
        den += fd.data()[i] * fd.data()[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

Matrix finite_difference(const std::function<double(const Matrix&)>& f, Matrix at, double eps) {
    Matrix grad(at.rows(), at.cols());
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double keep = at.data()[i];
        at.data()[i] = keep + eps;
        const double hi = f(at);
        at.data()[i] = keep - eps;
        const double lo = f(at);
        at.data()[i] = keep;
        grad.data()[i] = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

void cmd_grad_check(const json& cfg, const CliOptions& opts, const fs::path& dir) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const std::size_t batches = cfg.at("batches").get<std::size_t>();
    const std::size_t n = cfg.at("batch_n").get<std::size_t>();
    const std::size_t c = cfg.at("embed_dim").get<std::size_t>();
    const double tau = cfg.at("tau").get<double>();
    const double lambda_bt = cfg.at("lambda_bt").get<double>();
    const double eps = cfg.at("epsilon").get<double>();

    const std::vector<std::string> methods = {"infonce", "byol", "barlow"};
    std::vector<std::vector<double>> errors(methods.size(), std::vector<double>(batches));
    parallel_for(batches, opts.threads, [&](std::size_t b) {
        RngStream rng(seed, 4'000'000 + b);
        Matrix u1(n, c), u2(n, c);
        for (double& v : u1.data()) v = rng.normal();
        for (double& v : u2.data()) v = rng.normal();
        // infonce
        {
            EmbeddingBatch batch{u1, u2, std::nullopt};
            const Matrix analytic = infonce_grad(batch, tau);
            const Matrix fd = finite_difference(
                [&](const Matrix& m) {
                    return infonce_loss(EmbeddingBatch{m, u2, std::nullopt}, tau);
                },
                u1, eps);
            errors[0][b] = norm_rel_error(analytic, fd);
        }
        // byol, gradient w.r.t. the online branch
        {
            Matrix pw(c, c);
            for (double& v : pw.data()) v = rng.normal() * 0.3;
            for (std::size_t i = 0; i < c; ++i) pw(i, i) += 1.0;
            Vector pb(c);
            for (double& v : pb) v = rng.normal() * 0.1;
            const ByolGrads g = byol_grad(u1, u2, pw, pb);
            const Matrix fd = finite_difference(
                [&](const Matrix& m) { return byol_loss(m, u2, pw, pb); }, u1, eps);
            errors[1][b] = norm_rel_error(g.d_online, fd);
        }
        // barlow twins
        {
            const Matrix analytic = barlow_grad(u1, u2, lambda_bt);
            const Matrix fd = finite_difference(
                [&](const Matrix& m) { return barlow_loss(m, u2, lambda_bt); }, u1, eps);
            errors[2][b] = norm_rel_error(analytic, fd);
        }
    });

    CsvBuilder csv;
    csv.header("method,batch,rel_error");
    json per_method;
    bool pass = true;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        double worst = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            worst = std::max(worst, errors[m][b]);
            csv.row({methods[m], std::to_string(b), csv_cell(errors[m][b])});
        }
        per_method[methods[m]] = worst;
        if (worst > 1e-4) pass = false;
    }
    write_file_atomic((dir / "grad_errors.csv").string(), csv.text);
    json summary;
    summary["command"] = "grad-check";
    summary["seed"] = seed;
    summary["max_rel_error"] = per_method;
    summary["pass"] = pass;
    write_file_atomic((dir / "summary.json").string(), dump_json(summary));
}

// ---------------------------------------------------------------------------
// rela-run
// ---------------------------------------------------------------------------

std::unique_ptr<PriorModel> make_prior(const std::string& kind, const MixtureSpec& spec,
                                       const json& cfg, std::uint64_t seed) {
    if (kind == "oracle") return std::make_unique<MixturePosteriorPrior>(spec);
    if (kind == "identity") return std::make_unique<IdentityPrior>(spec.dim);
    if (kind == "random-mlp") {
        RngStream rng(seed, 5'000'100);
        const auto hidden = cfg.at("prior_hidden").get<std::vector<std::size_t>>();
        std::vector<std::size_t> sizes{spec.dim};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(cfg.at("prior_out").get<std::size_t>());
        return std::make_unique<MlpPrior>(Mlp::init(sizes, rng), "random-mlp");
    }
    throw std::invalid_argument("rela-run: unknown prior kind '" + kind + "'");
}

TrainConfig train_config_from_json(const json& t, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = t.at("epochs").get<std::size_t>();
    cfg.batch_size = t.at("batch_size").get<std::size_t>();
    cfg.learning_rate = t.at("learning_rate").get<double>();
    const std::string opt = t.at("optimizer").get<std::string>();
    if (opt == "adam")
        cfg.optimizer = OptimizerKind::adam;
    else if (opt == "sgd")
        cfg.optimizer = OptimizerKind::sgd_momentum;
    else
        throw std::invalid_argument("rela-run: unknown optimizer '" + opt + "'");
    cfg.sgd_momentum = t.at("sgd_momentum").get<double>();
    cfg.ssl.method = ssl_method_from_string(t.at("ssl_method").get<std::string>());
    cfg.ssl.temperature = t.at("temperature").get<double>();
    cfg.ssl.barlow_weight = t.at("barlow_weight").get<double>();
    cfg.ssl.ema_momentum = t.at("ema_momentum").get<double>();
    cfg.aug_std = t.at("aug_std").get<double>();
    const std::size_t refresh = t.at("target_refresh_k").get<std::size_t>();
    if (refresh > 0) cfg.target_refresh_k = refresh;
    cfg.seed = seed;
    return cfg;
}

std::string run_log_csv(const RunLog& log) {
    CsvBuilder csv;
    csv.header("step,epoch,phase,loss,lambda,ell_s,ell_f");
    for (const auto& r : log.records)
        csv.row({std::to_string(r.step), std::to_string(r.epoch), r.phase, csv_cell(r.loss),
                 std::to_string(r.lambda), csv_cell(r.ell_s), csv_cell(r.ell_f)});
    return csv.text;
}

void cmd_rela_run(const json& cfg, const CliOptions& opts, const fs::path& dir) {
    (void)opts;
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const json& data = cfg.at("data");
    MixtureSpec spec;
    spec.mu1 = data.at("mu1").get<double>();
    spec.mu2 = data.at("mu2").get<double>();
    spec.sigma = data.at("sigma").get<double>();
    spec.dim = data.at("dim").get<std::size_t>();
    const std::size_t n_train = data.at("n_train").get<std::size_t>();
    const std::size_t n_eval = data.at("n_eval").get<std::size_t>();

    RngStream data_rng(seed, 5'000'000);
    const LabeledSet train = make_mixture(spec, n_train, data_rng);
    const LabeledSet eval_set = make_mixture(spec, n_eval, data_rng);

    const auto prior = make_prior(cfg.at("prior").get<std::string>(), spec, cfg, seed);
    const Matrix raw_targets = generate_targets(*prior, train.x);

    const std::size_t pca_k = cfg.at("pca_components").get<std::size_t>();
    TargetStore store;
    if (pca_k > 0) {
        ReduceResult red = reduce_targets(raw_targets, pca_k, cfg.at("pca_standardize").get<bool>());
        store = TargetStore::from_matrix(red.reduced, prior->id(), seed, std::move(red.model));
    } else {
        store = TargetStore::from_matrix(raw_targets, prior->id(), seed);
    }
    save_target_store(store, (dir / "targets.store").string());

    const auto hidden = cfg.at("encoder_hidden").get<std::vector<std::size_t>>();
    std::vector<std::size_t> sizes{spec.dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(cfg.at("encoder_out").get<std::size_t>());
    RngStream init_rng(seed, 5'000'001);
    const Mlp encoder0 = Mlp::init(sizes, init_rng);

    const TrainConfig train_cfg = train_config_from_json(cfg.at("train"), seed);
    ProbeConfig probe_cfg;
    probe_cfg.epochs = cfg.at("probe").at("epochs").get<std::size_t>();
    probe_cfg.batch_size = cfg.at("probe").at("batch_size").get<std::size_t>();
    probe_cfg.learning_rate = cfg.at("probe").at("learning_rate").get<double>();

    std::vector<int> eval_labels(eval_set.y.size());
    for (std::size_t i = 0; i < eval_labels.size(); ++i)
        eval_labels[i] = eval_set.y[i] >= 0.5 ? 1 : 0;

    const std::size_t probe_every = cfg.at("probe_every").get<std::size_t>();
    const double probe_threshold = cfg.at("probe_threshold").get<double>();

    auto probe_at = [&](std::size_t step, const Mlp& enc) {
        RngStream probe_rng(seed, 6'000'000 + step);
        return linear_probe(enc.forward(eval_set.x), eval_labels, probe_cfg, probe_rng);
    };

    auto run_variant = [&](bool rela_enabled, std::uint64_t stream, json& out) {
        TrainConfig variant = train_cfg;
        variant.rela_enabled = rela_enabled;
        RngStream train_rng(seed, stream);
        json checkpoints = json::array();
        double steps_to_target = std::numeric_limits<double>::infinity();
        CheckpointFn observer;
        if (probe_every > 0)
            observer = [&](std::size_t step, const Mlp& enc) {
                const double acc = probe_at(step, enc);
                checkpoints.push_back(json{{"step", step}, {"accuracy", acc}});
                if (acc >= probe_threshold)
                    steps_to_target = std::min(steps_to_target, static_cast<double>(step));
            };
        TrainResult result = train_rela(encoder0, train.x, store, variant, train_rng, prior.get(),
                                        probe_every, observer);
        const double final_acc = probe_at(result.state.step + 1, result.encoder);
        out["probe_accuracy"] = final_acc;
        out["flip_step"] =
            result.log.flip_step ? json(*result.log.flip_step) : json(nullptr);
        out["final_loss"] = result.log.records.back().loss;
        out["ell_s"] = result.state.ell_s;
        out["ell_f"] = result.state.ell_f;
        if (probe_every > 0) {
            out["probe_checkpoints"] = checkpoints;
            out["steps_to_probe_threshold"] = finite_or_null(steps_to_target);
        }
        return result;
    };

    json summary;
    summary["command"] = "rela-run";
    summary["seed"] = seed;
    summary["prior_id"] = prior->id();
    summary["store_rows"] = store.rows;
    summary["store_cols"] = store.cols;

    json rela_out;
    TrainResult rela_result = run_variant(true, 5'000'002, rela_out);
    write_file_atomic((dir / "run_log.csv").string(), run_log_csv(rela_result.log));
    summary["rela"] = rela_out;

    if (cfg.at("baseline").get<bool>()) {
        json base_out;
        TrainResult base_result = run_variant(false, 5'000'003, base_out);
        write_file_atomic((dir / "baseline_log.csv").string(), run_log_csv(base_result.log));
        summary["baseline"] = base_out;
    }
    write_file_atomic((dir / "summary.json").string(), dump_json(summary));
}

// ---------------------------------------------------------------------------
// overlap
// ---------------------------------------------------------------------------

void cmd_overlap(const json& cfg, const CliOptions& opts, const fs::path& dir) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    const double delta_mu = cfg.at("delta_mu").get<double>();
    const double base_sigma2 = cfg.at("base_sigma2").get<double>();
    const double k = cfg.at("k").get<double>();
    const auto alpha_grid = cfg.at("alpha_grid").get<std::vector<double>>();
    const std::size_t n = cfg.at("n").get<std::size_t>();

    std::vector<OverlapEstimate> mc(alpha_grid.size());
    parallel_for(alpha_grid.size(), opts.threads, [&](std::size_t i) {
        const double sigma_aug = std::sqrt(base_sigma2 + k * alpha_grid[i]);
        RngStream rng(seed, 7'000'000 + i);
        mc[i] = overlap_mc_with_error(0.0, delta_mu, sigma_aug, n, rng);
    });

    CsvBuilder csv;
    csv.header("alpha,sigma_aug,overlap_mc,mc_std_error,overlap_paper");
    bool mc_increasing = true;
    bool paper_decreasing = true;
    double prev_mc = -1.0, prev_paper = 2.0;
    for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
        const double sigma_aug = std::sqrt(base_sigma2 + k * alpha_grid[i]);
        const double paper = overlap_paper(delta_mu, base_sigma2, k, alpha_grid[i]);
        csv.row({csv_cell(alpha_grid[i]), csv_cell(sigma_aug), csv_cell(mc[i].value),
                 csv_cell(mc[i].std_error), csv_cell(paper)});
        if (i > 0) {
            if (mc[i].value <= prev_mc) mc_increasing = false;
            if (paper >= prev_paper) paper_decreasing = false;
        }
        prev_mc = mc[i].value;
        prev_paper = paper;
    }
    write_file_atomic((dir / "overlap.csv").string(), csv.text);

    json summary;
    summary["command"] = "overlap";
    summary["seed"] = seed;
    summary["mc_overlap_strictly_increasing"] = mc_increasing;
    summary["closed_form_strictly_decreasing"] = paper_decreasing;
    write_file_atomic((dir / "summary.json").string(), dump_json(summary));
}

// ---------------------------------------------------------------------------
// repdist
// ---------------------------------------------------------------------------

struct NamedFeatureMap {
    std::string id;
    FeatureMap fn;
};

std::vector<NamedFeatureMap> build_encoders(const json& cfg, const MixtureSpec& spec,
                                            std::uint64_t seed) {
    std::vector<NamedFeatureMap> out;
    std::size_t index = 0;
    for (const json& enc : cfg.at("encoders")) {
        for (const auto& [key, value] : enc.items()) {
            (void)value;
            if (key != "id" && key != "kind" && key != "hidden" && key != "out")
                throw std::invalid_argument("repdist: unknown encoder key '" + key + "'");
        }
        const std::string kind = enc.at("kind").get<std::string>();
        const std::string id = enc.value("id", kind + std::to_string(index));
        if (kind == "identity") {
            out.push_back({id, [](const Matrix& x) { return x; }});
        } else if (kind == "square") {
            out.push_back({id, [](const Matrix& x) {
                               Matrix y = x;
                               for (double& v : y.data()) v *= v;
                               return y;
                           }});
        } else if (kind == "random-mlp") {
            const auto hidden = enc.value("hidden", std::vector<std::size_t>{32});
            std::vector<std::size_t> sizes{spec.dim};
            sizes.insert(sizes.end(), hidden.begin(), hidden.end());
            sizes.push_back(enc.value("out", spec.dim));
            RngStream rng(seed, 8'000'100 + index);
            auto net = std::make_shared<Mlp>(Mlp::init(sizes, rng));
            out.push_back({id, [net](const Matrix& x) { return net->forward(x); }});
        } else if (kind == "affine") {
            RngStream rng(seed, 8'000'100 + index);
            auto w = std::make_shared<Matrix>(spec.dim, spec.dim);
            auto b = std::make_shared<Vector>(spec.dim);
            for (double& v : w->data()) v = rng.normal();
            for (double& v : *b) v = rng.normal();
            out.push_back({id, [w, b](const Matrix& x) {
                               Matrix y(x.rows(), w->rows());
                               for (std::size_t i = 0; i < x.rows(); ++i)
                                   for (std::size_t o = 0; o < w->rows(); ++o)
                                       y(i, o) = (*b)[o] + dot(w->row(o), x.row(i));
                               return y;
                           }});
        } else {
            throw std::invalid_argument("repdist: unknown encoder kind '" + kind + "'");
        }
        ++index;
    }
    if (out.size() < 2) throw std::invalid_argument("repdist: need at least 2 encoders");
    return out;
}

void cmd_repdist(const json& cfg, const CliOptions& opts, const fs::path& dir) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    MixtureSpec spec;
    spec.mu1 = cfg.at("mu1").get<double>();
    spec.mu2 = cfg.at("mu2").get<double>();
    spec.sigma = cfg.at("sigma").get<double>();
    spec.dim = cfg.at("dim").get<std::size_t>();
    const std::size_t n = cfg.at("n").get<std::size_t>();

    RngStream data_rng(seed, 8'000'000);
    const LabeledSet data = make_mixture(spec, n, data_rng);
    const auto encoders = build_encoders(cfg, spec, seed);

    std::vector<Matrix> features(encoders.size());
    for (std::size_t i = 0; i < encoders.size(); ++i) features[i] = encoders[i].fn(data.x);

    const std::size_t pairs = encoders.size() * encoders.size();
    std::vector<double> values(pairs);
    DistanceConfig dist_cfg;
    dist_cfg.seed = seed;
    parallel_for(pairs, opts.threads, [&](std::size_t p) {
        const std::size_t i = p / encoders.size();
        const std::size_t j = p % encoders.size();
        values[p] = rep_distance_features(features[i], features[j], dist_cfg).value;
    });

    CsvBuilder csv;
    std::string header = "source";
    for (const auto& e : encoders) header += "," + e.id;
    csv.header(header);
    for (std::size_t i = 0; i < encoders.size(); ++i) {
        std::vector<std::string> cells{encoders[i].id};
        for (std::size_t j = 0; j < encoders.size(); ++j)
            cells.push_back(csv_cell(values[i * encoders.size() + j]));
        csv.row(cells);
    }
    write_file_atomic((dir / "distance_matrix.csv").string(), csv.text);

    double max_self = 0.0;
    for (std::size_t i = 0; i < encoders.size(); ++i)
        max_self = std::max(max_self, values[i * encoders.size() + i]);
    json summary;
    summary["command"] = "repdist";
    summary["seed"] = seed;
    summary["max_self_distance"] = max_self;
    write_file_atomic((dir / "summary.json").string(), dump_json(summary));
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"case-sigma", "case-rho", "pca-verify",
                                                   "grad-check", "rela-run", "overlap",
                                                   "repdist"};
    return names;
}

json default_config(const std::string& command) {
    if (command == "case-sigma") {
        return json{{"name", "case-sigma"},
                    {"seed", 1},
                    {"sigma_grid", {0.1, 0.3, 0.5, 0.8, 1.0}},
                    {"seeds", 20},
                    {"dim", 2},
                    {"train_n", 1000},
                    {"val_n", 10000},
                    {"steps", 1000},
                    {"batch_size", 1},
                    {"learning_rate", 0.002},
                    {"momentum", 0.98},
                    {"mse_threshold", 0.1}};
    }
    if (command == "case-rho") {
        return json{{"name", "case-rho"},
                    {"seed", 1},
                    {"rho_grid", {0.0, 0.25, 0.5, 0.75, 1.0}},
                    {"seeds", 20},
                    {"dim", 2},
                    {"sigma", 1.0},
                    {"prior_sigma", 0.1},
                    {"train_n", 1000},
                    {"val_n", 10000},
                    {"steps", 1000},
                    {"batch_size", 1},
                    {"learning_rate", 0.002},
                    {"momentum", 0.98},
                    {"mse_threshold", 0.15}};
    }
    if (command == "pca-verify") {
        return json{{"name", "pca-verify"}, {"seed", 1},     {"n_matrices", 30},
                    {"max_rows", 512},      {"max_cols", 64}, {"k_max", 16},
                    {"batch_sizes", {1, 7, 64, 0}}};
    }
    if (command == "grad-check") {
        return json{{"name", "grad-check"}, {"seed", 1},        {"batches", 20},
                    {"batch_n", 8},         {"embed_dim", 16},  {"tau", 0.2},
                    {"lambda_bt", 0.005},   {"epsilon", 1e-6}};
    }
    if (command == "rela-run") {
        return json{{"name", "rela-run"},
                    {"seed", 1},
                    {"data",
                     {{"dim", 10},
                      {"mu1", 1.0},
                      {"mu2", 2.0},
                      {"sigma", 1.0},
                      {"n_train", 2048},
                      {"n_eval", 2048}}},
                    {"prior", "oracle"},
                    {"prior_hidden", {32}},
                    {"prior_out", 8},
                    {"pca_components", 0},
                    {"pca_standardize", false},
                    {"encoder_hidden", {64, 64}},
                    {"encoder_out", 8},
                    {"train",
                     {{"epochs", 60},
                      {"batch_size", 128},
                      {"learning_rate", 0.001},
                      {"optimizer", "adam"},
                      {"sgd_momentum", 0.9},
                      {"ssl_method", "byol"},
                      {"temperature", 0.2},
                      {"barlow_weight", 0.005},
                      {"ema_momentum", 0.99},
                      {"aug_std", 0.1},
                      {"target_refresh_k", 0}}},
                    {"probe", {{"epochs", 30}, {"batch_size", 128}, {"learning_rate", 3e-4}}},
                    {"probe_every", 100},
                    {"probe_threshold", 0.9},
                    {"baseline", false}};
    }
    if (command == "overlap") {
        return json{{"name", "overlap"},
                    {"seed", 1},
                    {"delta_mu", 1.0},
                    {"base_sigma2", 0.0625},
                    {"k", 1.0},
                    {"alpha_grid", {0.0, 0.1875, 0.9375, 3.9375}},
                    {"n", 1000000}};
    }
    if (command == "repdist") {
        return json{{"name", "repdist"},
                    {"seed", 1},
                    {"dim", 8},
                    {"mu1", 1.0},
                    {"mu2", 2.0},
                    {"sigma", 1.0},
                    {"n", 2048},
                    {"encoders",
                     {{{"id", "identity"}, {"kind", "identity"}},
                      {{"id", "mlp-a"}, {"kind", "random-mlp"}, {"hidden", {32}}, {"out", 8}},
                      {{"id", "mlp-b"}, {"kind", "random-mlp"}, {"hidden", {32}}, {"out", 8}},
                      {{"id", "square"}, {"kind", "square"}}}}};
    }
    throw std::invalid_argument("unknown command: " + command);
}

json merge_config(const std::string& command, const json& user) {
    json merged = default_config(command);
    if (!user.is_null()) {
        if (!user.is_object()) throw std::invalid_argument("config: root must be an object");
        merge_into(merged, user, "");
    }
    return merged;
}

std::string config_hash(const std::string& command, const json& config) {
    return hex16(fnv1a64(command + "\n" + config.dump()));
}

std::string run_command(const std::string& command, const json& user_config,
                        const CliOptions& opts) {
    json config = merge_config(command, user_config);
    if (opts.seed_override) config["seed"] = *opts.seed_override;

    const fs::path dir = fs::path(opts.out_dir) / (command + "-" + config_hash(command, config));
    fs::create_directories(dir);
    write_file_atomic((dir / "config.json").string(), dump_json(config));

    if (command == "case-sigma")
        cmd_case_sigma(config, opts, dir);
    else if (command == "case-rho")
        cmd_case_rho(config, opts, dir);
    else if (command == "pca-verify")
        cmd_pca_verify(config, opts, dir);
    else if (command == "grad-check")
        cmd_grad_check(config, opts, dir);
    else if (command == "rela-run")
        cmd_rela_run(config, opts, dir);
    else if (command == "overlap")
        cmd_overlap(config, opts, dir);
    else if (command == "repdist")
        cmd_repdist(config, opts, dir);
    else
        throw std::invalid_argument("unknown command: " + command);

    if (!opts.quiet) std::printf("%s\n", dir.string().c_str());
    return dir.string();
}

}  // namespace rela::cli
