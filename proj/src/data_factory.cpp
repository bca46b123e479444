#include "rela/data_factory.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace rela {

using nlohmann::json;

Matrix IdentityPrior::forward(const Matrix& x) const {
    if (x.cols() != dim_) throw std::invalid_argument("IdentityPrior: dimension mismatch");
    return x;
}

Matrix TinyNetPrior::forward(const Matrix& x) const {
    if (x.cols() != net_.dim()) throw std::invalid_argument("TinyNetPrior: dimension mismatch");
    Matrix out(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) out(i, 0) = tiny_forward(net_, x.row(i));
    return out;
}

Matrix StoredTablePrior::forward(const Matrix& x) const {
    if (x.rows() != table_.rows())
        throw std::invalid_argument("StoredTablePrior: row count must match the stored table");
    return table_;
}

Matrix MixturePosteriorPrior::forward(const Matrix& x) const {
    if (x.cols() != spec_.dim)
        throw std::invalid_argument("MixturePosteriorPrior: dimension mismatch");
    Matrix out(x.rows(), 2);
    const double inv_2s2 = 1.0 / (2.0 * spec_.sigma * spec_.sigma);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto row = x.row(i);
        double d1 = 0.0, d2 = 0.0;
        for (double v : row) {
            d1 += (v - spec_.mu1) * (v - spec_.mu1);
            d2 += (v - spec_.mu2) * (v - spec_.mu2);
        }
        // posterior via the log-likelihood ratio, numerically stable
        const double logit = (d1 - d2) * inv_2s2;  // log P(1|x) - log P(0|x)
        const double p1 = 1.0 / (1.0 + std::exp(-logit));
        out(i, 0) = 1.0 - p1;
        out(i, 1) = p1;
    }
    return out;
}

Matrix generate_targets(const PriorModel& prior, const Matrix& x, std::size_t threads) {
    if (x.rows() == 0) throw std::invalid_argument("generate_targets: empty input");
    if (threads <= 1 || x.rows() < 64) {
        Matrix out = prior.forward(x);
        if (out.rows() != x.rows() || out.cols() != prior.output_dim())
            throw std::runtime_error("generate_targets: prior produced wrong shape");
        return out;
    }
    // shard rows across workers; output row order equals input order
    const std::size_t shards = std::min<std::size_t>(threads * 4, x.rows());
    const std::size_t chunk = (x.rows() + shards - 1) / shards;
    Matrix out(x.rows(), prior.output_dim());
    parallel_for(shards, threads, [&](std::size_t s) {
        const std::size_t start = s * chunk;
        const std::size_t stop = std::min(start + chunk, x.rows());
        if (start >= stop) return;
        Matrix slice(stop - start, x.cols());
        for (std::size_t i = start; i < stop; ++i) {
            const auto src = x.row(i);
            std::copy(src.begin(), src.end(), slice.row(i - start).begin());
        }
        const Matrix res = prior.forward(slice);
        for (std::size_t i = start; i < stop; ++i) {
            const auto src = res.row(i - start);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
    });
    return out;
}

void ImageTensor::validate() const {
    if (channels == 0 || height == 0 || width == 0)
        throw std::invalid_argument("ImageTensor: dimensions must be positive");
    if (pixels.size() != channels * height * width)
        throw std::invalid_argument("ImageTensor: pixel count mismatch");
    for (double v : pixels)
        if (!std::isfinite(v)) throw std::invalid_argument("ImageTensor: non-finite pixel");
}

namespace {

/// Corner-aligned bilinear sample of channel c at fractional (y, x).
double bilinear(const ImageTensor& img, std::size_t c, double y, double x) {
    const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const std::size_t x1 = std::min(x0 + 1, img.width - 1);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    const double top = img.at(c, y0, x0) * (1.0 - fx) + img.at(c, y0, x1) * fx;
    const double bot = img.at(c, y1, x0) * (1.0 - fx) + img.at(c, y1, x1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

}  // namespace

ImageTensor weak_augment(const ImageTensor& img, RngStream& rng, double min_scale, double flip_p,
                         double aspect_min, double aspect_max) {
    img.validate();
    if (!(min_scale > 0.0) || min_scale > 1.0)
        throw std::invalid_argument("weak_augment: min_scale must be in (0, 1]");
    if (flip_p < 0.0 || flip_p > 1.0)
        throw std::invalid_argument("weak_augment: flip_p must be in [0, 1]");
    if (!(aspect_min > 0.0) || aspect_min > aspect_max)
        throw std::invalid_argument("weak_augment: bad aspect range");

    const double full_area = static_cast<double>(img.width * img.height);
    std::size_t crop_w = img.width, crop_h = img.height, x0 = 0, y0 = 0;
    bool found = false;
    for (int attempt = 0; attempt < 10 && !found; ++attempt) {
        const double area = (min_scale + (1.0 - min_scale) * rng.uniform()) * full_area;
        const double aspect = aspect_min + (aspect_max - aspect_min) * rng.uniform();
        const double w = std::round(std::sqrt(area * aspect));
        const double h = std::round(std::sqrt(area / aspect));
        if (w < 1.0 || h < 1.0) continue;  // sub-pixel crop
        if (w > static_cast<double>(img.width) || h > static_cast<double>(img.height)) continue;
        crop_w = static_cast<std::size_t>(w);
        crop_h = static_cast<std::size_t>(h);
        x0 = crop_w < img.width ? rng.uniform_int(img.width - crop_w + 1) : 0;
        y0 = crop_h < img.height ? rng.uniform_int(img.height - crop_h + 1) : 0;
        found = true;
    }
    // fallback: full-frame center crop

    ImageTensor out;
    out.channels = img.channels;
    out.height = img.height;
    out.width = img.width;
    out.pixels.resize(img.pixels.size());
    for (std::size_t c = 0; c < img.channels; ++c) {
        for (std::size_t i = 0; i < img.height; ++i) {
            const double sy = img.height > 1
                                  ? static_cast<double>(y0) +
                                        static_cast<double>(i) *
                                            static_cast<double>(crop_h - 1) /
                                            static_cast<double>(img.height - 1)
                                  : static_cast<double>(y0);
            for (std::size_t j = 0; j < img.width; ++j) {
                const double sx = img.width > 1
                                      ? static_cast<double>(x0) +
                                            static_cast<double>(j) *
                                                static_cast<double>(crop_w - 1) /
                                                static_cast<double>(img.width - 1)
                                      : static_cast<double>(x0);
                out.at(c, i, j) = bilinear(img, c, sy, sx);
            }
        }
    }
    if (rng.uniform() < flip_p) {
        for (std::size_t c = 0; c < out.channels; ++c)
            for (std::size_t i = 0; i < out.height; ++i)
                for (std::size_t j = 0; j < out.width / 2; ++j)
                    std::swap(out.at(c, i, j), out.at(c, i, out.width - 1 - j));
    }
    return out;
}

namespace {

json pca_to_json(const PcaModel& model) {
    json j;
    j["mean"] = model.mean;
    if (model.col_std) j["col_std"] = *model.col_std;
    j["eigenvalues"] = model.eigenvalues;
    json comps = json::array();
    for (std::size_t i = 0; i < model.components.rows(); ++i) {
        json row = json::array();
        for (std::size_t k = 0; k < model.components.cols(); ++k)
            row.push_back(model.components(i, k));
        comps.push_back(std::move(row));
    }
    j["components"] = std::move(comps);
    return j;
}

PcaModel pca_from_json(const json& j) {
    PcaModel model;
    model.mean = j.at("mean").get<Vector>();
    if (j.contains("col_std")) model.col_std = j.at("col_std").get<Vector>();
    model.eigenvalues = j.at("eigenvalues").get<Vector>();
    const auto& comps = j.at("components");
    const std::size_t d = comps.size();
    const std::size_t k = d > 0 ? comps.at(0).size() : 0;
    model.components = Matrix(d, k);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t c = 0; c < k; ++c) model.components(i, c) = comps.at(i).at(c);
    return model;
}

void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v & 0xFF),
                            static_cast<unsigned char>((v >> 8) & 0xFF),
                            static_cast<unsigned char>((v >> 16) & 0xFF),
                            static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

TargetStore TargetStore::from_matrix(const Matrix& m, std::string prior_id, std::uint64_t seed,
                                     std::optional<PcaModel> pca) {
    TargetStore store;
    store.rows = m.rows();
    store.cols = m.cols();
    store.prior_id = std::move(prior_id);
    store.seed = seed;
    store.pca = std::move(pca);
    store.payload.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i)
        store.payload[i] = static_cast<float>(m.data()[i]);
    return store;
}

Matrix TargetStore::to_matrix() const {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < payload.size(); ++i) m.data()[i] = payload[i];
    return m;
}

void save_target_store(const TargetStore& store, const std::string& path) {
    if (store.payload.size() != store.rows * store.cols)
        throw StoreError(StoreErrorKind::integrity,
                         "save_target_store: payload length does not match rows * cols");
    json header;
    header["rows"] = store.rows;
    header["cols"] = store.cols;
    header["dtype"] = "f32";
    header["prior_id"] = store.prior_id;
    header["seed"] = store.seed;
    if (store.pca) header["pca"] = pca_to_json(*store.pca);
    const std::string header_text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw StoreError(StoreErrorKind::io, "save_target_store: cannot open " + path);
    os.write("RELA", 4);
    const char version = static_cast<char>(TargetStore::kVersion);
    os.write(&version, 1);
    write_u32_le(os, static_cast<std::uint32_t>(header_text.size()));
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    static_assert(sizeof(float) == 4);
    // payload is little-endian on every platform this builds for
    os.write(reinterpret_cast<const char*>(store.payload.data()),
             static_cast<std::streamsize>(store.payload.size() * sizeof(float)));
    if (!os) throw StoreError(StoreErrorKind::io, "save_target_store: write failed");
}

TargetStore load_target_store(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StoreError(StoreErrorKind::io, "load_target_store: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "RELA", 4) != 0)
        throw StoreError(StoreErrorKind::corrupt_header, "load_target_store: bad magic");
    char version;
    if (!is.read(&version, 1))
        throw StoreError(StoreErrorKind::corrupt_header, "load_target_store: missing version");
    if (static_cast<std::uint8_t>(version) != TargetStore::kVersion)
        throw StoreError(StoreErrorKind::version_mismatch,
                         "load_target_store: unsupported version " +
                             std::to_string(static_cast<int>(version)));
    unsigned char len_buf[4];
    if (!is.read(reinterpret_cast<char*>(len_buf), 4))
        throw StoreError(StoreErrorKind::corrupt_header, "load_target_store: missing header length");
    const std::uint32_t header_len = static_cast<std::uint32_t>(len_buf[0]) |
                                     (static_cast<std::uint32_t>(len_buf[1]) << 8) |
                                     (static_cast<std::uint32_t>(len_buf[2]) << 16) |
                                     (static_cast<std::uint32_t>(len_buf[3]) << 24);
    std::string header_text(header_len, '\0');
    if (!is.read(header_text.data(), header_len))
        throw StoreError(StoreErrorKind::truncated, "load_target_store: truncated header");
    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw StoreError(StoreErrorKind::corrupt_header,
                         std::string("load_target_store: invalid header JSON: ") + e.what());
    }

    TargetStore store;
    try {
        store.rows = header.at("rows").get<std::uint64_t>();
        store.cols = header.at("cols").get<std::uint64_t>();
        store.prior_id = header.at("prior_id").get<std::string>();
        store.seed = header.at("seed").get<std::uint64_t>();
        if (header.at("dtype").get<std::string>() != "f32")
            throw StoreError(StoreErrorKind::corrupt_header, "load_target_store: unknown dtype");
        if (header.contains("pca")) store.pca = pca_from_json(header.at("pca"));
    } catch (const json::exception& e) {
        throw StoreError(StoreErrorKind::corrupt_header,
                         std::string("load_target_store: bad header fields: ") + e.what());
    }

    store.payload.resize(store.rows * store.cols);
    if (!is.read(reinterpret_cast<char*>(store.payload.data()),
                 static_cast<std::streamsize>(store.payload.size() * sizeof(float))))
        throw StoreError(StoreErrorKind::truncated, "load_target_store: truncated payload");
    char extra;
    if (is.read(&extra, 1))
        throw StoreError(StoreErrorKind::integrity,
                         "load_target_store: trailing bytes after payload");
    return store;
}

double overlap_paper(double delta_mu, double sigma2, double k, double alpha) {
    if (!(delta_mu > 0.0)) throw std::invalid_argument("overlap_paper: delta_mu must be > 0");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("overlap_paper: sigma2 must be > 0");
    if (k < 0.0 || alpha < 0.0)
        throw std::invalid_argument("overlap_paper: k and alpha must be >= 0");
    return 2.0 * std_normal_cdf(delta_mu / std::sqrt(2.0 * (sigma2 + k * alpha))) - 1.0;
}

OverlapEstimate overlap_mc_with_error(double mu1, double mu2, double sigma_aug, std::size_t n,
                                      RngStream& rng) {
    if (!(sigma_aug > 0.0)) throw std::invalid_argument("overlap_mc: sigma_aug must be > 0");
    if (n < 10000) throw std::invalid_argument("overlap_mc: n must be >= 1e4");
    // importance sample from the balanced mixture q = (p1 + p2) / 2; the
    // integrand min(p1, p2) / q = 2 min(r, 1) / (r + 1) with the likelihood
    // ratio r = p2 / p1 is bounded in (0, 1]
    const double inv_2s2 = 1.0 / (2.0 * sigma_aug * sigma_aug);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double mu = rng.uniform() < 0.5 ? mu1 : mu2;
        const double x = mu + sigma_aug * rng.normal();
        const double d1 = (x - mu1) * (x - mu1);
        const double d2 = (x - mu2) * (x - mu2);
        const double log_r = (d1 - d2) * inv_2s2;  // log(p2 / p1)
        const double r = std::exp(-std::fabs(log_r));  // min(p1,p2)/max(p1,p2)
        const double w = 2.0 * r / (1.0 + r);
        sum += w;
        sum_sq += w * w;
    }
    OverlapEstimate est;
    const double mean = sum / static_cast<double>(n);
    est.value = mean;
    const double var = std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
    est.std_error = std::sqrt(var / static_cast<double>(n));
    return est;
}

double overlap_mc(double mu1, double mu2, double sigma_aug, std::size_t n, RngStream& rng) {
    return overlap_mc_with_error(mu1, mu2, sigma_aug, n, rng).value;
}

}  // namespace rela
