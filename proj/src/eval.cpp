#include "rela/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace rela {

void ProbeConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("ProbeConfig: counts must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("ProbeConfig: learning_rate must be > 0");
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        throw std::invalid_argument("ProbeConfig: train_fraction must be in (0, 1)");
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace

double linear_probe(const Matrix& features, const std::vector<int>& labels,
                    const ProbeConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (features.rows() != labels.size())
        throw std::invalid_argument("linear_probe: label count mismatch");
    if (features.rows() < 4) throw std::invalid_argument("linear_probe: too few samples");
    std::set<int> class_set(labels.begin(), labels.end());
    if (class_set.size() < 2)
        throw std::invalid_argument("linear_probe: need at least 2 classes");
    for (int c : labels)
        if (c < 0) throw std::invalid_argument("linear_probe: labels must be non-negative");
    const std::size_t n_classes = static_cast<std::size_t>(*class_set.rbegin()) + 1;
    const std::size_t d = features.cols();
    const std::size_t n = features.rows();

    const std::vector<std::size_t> order = shuffled_indices(n, rng);
    const std::size_t n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(cfg.train_fraction * n));
    if (n_train >= n) throw std::invalid_argument("linear_probe: empty held-out split");

    Matrix w(n_classes, d);
    Vector b(n_classes, 0.0);
    Vector logits(n_classes), probs(n_classes);
    Matrix gw(n_classes, d);
    Vector gb(n_classes);

    // adaptive-moment state
    Matrix mw(n_classes, d), vw(n_classes, d);
    Vector mb(n_classes, 0.0), vb(n_classes, 0.0);
    std::size_t t = 0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

    std::vector<std::size_t> batch;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::size_t> sweep = shuffled_indices(n_train, rng);
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, n_train);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(order[sweep[i]]);

            std::fill(gw.data().begin(), gw.data().end(), 0.0);
            std::fill(gb.begin(), gb.end(), 0.0);
            const double inv = 1.0 / static_cast<double>(batch.size());
            for (const std::size_t row : batch) {
                const auto x = features.row(row);
                double peak = -1e300;
                for (std::size_t c = 0; c < n_classes; ++c) {
                    logits[c] = b[c] + dot(w.row(c), x);
                    peak = std::max(peak, logits[c]);
                }
                double denom = 0.0;
                for (std::size_t c = 0; c < n_classes; ++c) {
                    probs[c] = std::exp(logits[c] - peak);
                    denom += probs[c];
                }
                for (std::size_t c = 0; c < n_classes; ++c) {
                    const double p = probs[c] / denom;
                    const double g = (p - (static_cast<int>(c) == labels[row] ? 1.0 : 0.0)) * inv;
                    gb[c] += g;
                    auto grow = gw.row(c);
                    for (std::size_t k = 0; k < d; ++k) grow[k] += g * x[k];
                }
            }
            ++t;
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
            for (std::size_t i = 0; i < w.size(); ++i) {
                mw.data()[i] = b1 * mw.data()[i] + (1.0 - b1) * gw.data()[i];
                vw.data()[i] = b2 * vw.data()[i] + (1.0 - b2) * gw.data()[i] * gw.data()[i];
                w.data()[i] -= cfg.learning_rate * (mw.data()[i] / bc1) /
                               (std::sqrt(vw.data()[i] / bc2) + eps);
            }
            for (std::size_t c = 0; c < n_classes; ++c) {
                mb[c] = b1 * mb[c] + (1.0 - b1) * gb[c];
                vb[c] = b2 * vb[c] + (1.0 - b2) * gb[c] * gb[c];
                b[c] -= cfg.learning_rate * (mb[c] / bc1) / (std::sqrt(vb[c] / bc2) + eps);
            }
        }
    }

    std::size_t correct = 0;
    for (std::size_t i = n_train; i < n; ++i) {
        const auto x = features.row(order[i]);
        std::size_t arg = 0;
        double best = -1e300;
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double v = b[c] + dot(w.row(c), x);
            if (v > best) {
                best = v;
                arg = c;
            }
        }
        if (static_cast<int>(arg) == labels[order[i]]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n - n_train);
}

DistanceEstimate rep_distance_features(const Matrix& f_s, const Matrix& f_t,
                                       const DistanceConfig& cfg) {
    if (f_s.rows() != f_t.rows()) throw std::invalid_argument("rep_distance: row mismatch");
    const std::size_t n = f_s.rows();
    const std::size_t d = f_s.cols();
    if (n < 10 * d)
        throw std::invalid_argument("rep_distance: need at least 10 samples per feature dim");

    RngStream rng(cfg.seed, 0x52455044ULL);
    const std::vector<std::size_t> order = [&] {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = rng.uniform_int(i);
            std::swap(idx[i - 1], idx[j]);
        }
        return idx;
    }();
    const std::size_t n_train =
        std::max<std::size_t>(d + 1, static_cast<std::size_t>(cfg.train_fraction * n));
    if (n_train >= n) throw std::invalid_argument("rep_distance: empty held-out split");

    // ridge least squares on the augmented design [F_s, 1]
    const std::size_t da = d + 1;
    Matrix gram(da, da);
    Matrix rhs(da, f_t.cols());
    for (std::size_t ii = 0; ii < n_train; ++ii) {
        const std::size_t row = order[ii];
        const auto x = f_s.row(row);
        const auto y = f_t.row(row);
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = x[a];
            auto grow = gram.row(a);
            for (std::size_t bcol = 0; bcol < d; ++bcol) grow[bcol] += xa * x[bcol];
            grow[d] += xa;
            auto rrow = rhs.row(a);
            for (std::size_t k = 0; k < f_t.cols(); ++k) rrow[k] += xa * y[k];
        }
        auto glast = gram.row(d);
        for (std::size_t bcol = 0; bcol < d; ++bcol) glast[bcol] += x[bcol];
        glast[d] += 1.0;
        auto rlast = rhs.row(d);
        for (std::size_t k = 0; k < f_t.cols(); ++k) rlast[k] += y[k];
    }
    double trace = 0.0;
    for (std::size_t a = 0; a < da; ++a) trace += gram(a, a);
    const double ridge = cfg.ridge_scale * trace / static_cast<double>(da);
    const Matrix coef = cholesky_solve(gram, rhs, ridge);  // da x m

    std::size_t mismatches = 0;
    Vector pred(f_t.cols());
    for (std::size_t ii = n_train; ii < n; ++ii) {
        const std::size_t row = order[ii];
        const auto x = f_s.row(row);
        const auto y = f_t.row(row);
        for (std::size_t k = 0; k < f_t.cols(); ++k) {
            double s = coef(d, k);
            for (std::size_t a = 0; a < d; ++a) s += x[a] * coef(a, k);
            pred[k] = s;
        }
        bool miss;
        if (cfg.categorical) {
            const auto arg = [&](std::span<const double> v) {
                std::size_t best = 0;
                for (std::size_t k = 1; k < v.size(); ++k)
                    if (v[k] > v[best]) best = k;
                return best;
            };
            miss = arg(pred) != arg(y);
        } else {
            double err = 0.0, ref = 0.0;
            for (std::size_t k = 0; k < f_t.cols(); ++k) {
                const double diff = pred[k] - y[k];
                err += diff * diff;
                ref += y[k] * y[k];
            }
            const double denom = std::max(std::sqrt(ref), 1e-12);
            miss = std::sqrt(err) / denom > cfg.mismatch_threshold;
        }
        if (miss) ++mismatches;
    }

    DistanceEstimate est;
    est.value = static_cast<double>(mismatches) / static_cast<double>(n - n_train);
    est.ridge_lambda = ridge;
    est.train_rows = n_train;
    est.test_rows = n - n_train;
    est.seed = cfg.seed;
    return est;
}

DistanceEstimate rep_distance(const FeatureMap& phi_s, const FeatureMap& phi_t, const Matrix& x,
                              const DistanceConfig& cfg) {
    return rep_distance_features(phi_s(x), phi_t(x), cfg);
}

namespace {

double gaussian_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace

double tv_gaussian_1d(double mu1, double sigma1, double mu2, double sigma2) {
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0))
        throw std::invalid_argument("tv_gaussian_1d: sigmas must be > 0");
    if (mu1 == mu2 && sigma1 == sigma2) return 0.0;
    if (sigma1 == sigma2)
        return 2.0 * std_normal_cdf(std::fabs(mu1 - mu2) / (2.0 * sigma1)) - 1.0;
    const double lo = std::min(mu1 - 12.0 * sigma1, mu2 - 12.0 * sigma2);
    const double hi = std::max(mu1 + 12.0 * sigma1, mu2 + 12.0 * sigma2);
    const double tv = 0.5 * integrate(
                                [&](double x) {
                                    return std::fabs(gaussian_pdf(x, mu1, sigma1) -
                                                     gaussian_pdf(x, mu2, sigma2));
                                },
                                lo, hi, 1e-12);
    return std::clamp(tv, 0.0, 1.0);
}

}  // namespace rela
