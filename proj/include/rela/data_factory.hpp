#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rela/case_study.hpp"
#include "rela/core_math.hpp"
#include "rela/mlp.hpp"
#include "rela/pca.hpp"

namespace rela {

/// Labeler mapping samples to representation rows. Deterministic given its
/// id and input; output width is constant.
class PriorModel {
public:
    virtual ~PriorModel() = default;
    virtual std::string id() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual Matrix forward(const Matrix& x) const = 0;
};

/// psi(x) = x.
class IdentityPrior final : public PriorModel {
public:
    explicit IdentityPrior(std::size_t dim) : dim_(dim) {}
    std::string id() const override { return "identity"; }
    std::size_t output_dim() const override { return dim_; }
    Matrix forward(const Matrix& x) const override;

private:
    std::size_t dim_;
};

/// Wraps a TinyNet classifier; one output column.
class TinyNetPrior final : public PriorModel {
public:
    TinyNetPrior(TinyNet net, std::string id) : net_(std::move(net)), id_(std::move(id)) {}
    std::string id() const override { return id_; }
    std::size_t output_dim() const override { return 1; }
    Matrix forward(const Matrix& x) const override;
    const TinyNet& net() const { return net_; }

private:
    TinyNet net_;
    std::string id_;
};

/// Wraps an Mlp encoder (random-init or trained).
class MlpPrior final : public PriorModel {
public:
    MlpPrior(Mlp net, std::string id) : net_(std::move(net)), id_(std::move(id)) {}
    std::string id() const override { return id_; }
    std::size_t output_dim() const override { return net_.output_dim(); }
    Matrix forward(const Matrix& x) const override { return net_.forward(x); }
    const Mlp& net() const { return net_; }

private:
    Mlp net_;
    std::string id_;
};

/// Serves precomputed representation rows; the input must have exactly one
/// row per stored row (sample order is the lookup key).
class StoredTablePrior final : public PriorModel {
public:
    StoredTablePrior(Matrix table, std::string id)
        : table_(std::move(table)), id_(std::move(id)) {}
    std::string id() const override { return id_; }
    std::size_t output_dim() const override { return table_.cols(); }
    Matrix forward(const Matrix& x) const override;

private:
    Matrix table_;
    std::string id_;
};

/// Bayes posterior [P(class 0 | x), P(class 1 | x)] of a known mixture; the
/// strongest labeler available for the synthetic task.
class MixturePosteriorPrior final : public PriorModel {
public:
    explicit MixturePosteriorPrior(MixtureSpec spec) : spec_(spec) { spec_.validate(); }
    std::string id() const override { return "mixture-posterior"; }
    std::size_t output_dim() const override { return 2; }
    Matrix forward(const Matrix& x) const override;

private:
    MixtureSpec spec_;
};

/// One representation row per sample, exactly one forward pass over x.
Matrix generate_targets(const PriorModel& prior, const Matrix& x, std::size_t threads = 1);

struct ImageTensor {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;  // CHW, values in [0, 1]

    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return pixels[(c * height + y) * width + x];
    }
    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return pixels[(c * height + y) * width + x];
    }
    void validate() const;
};

/// Random resized crop (area fraction uniform in [min_scale, 1], aspect
/// ratio uniform in [aspect_min, aspect_max], corner-aligned bilinear resize
/// back to the input size) followed by a horizontal flip with probability
/// flip_p. Infeasible crops are redrawn up to 10 times, then the full-frame
/// center crop is used.
ImageTensor weak_augment(const ImageTensor& img, RngStream& rng, double min_scale = 0.5,
                         double flip_p = 0.5, double aspect_min = 0.75,
                         double aspect_max = 4.0 / 3.0);

/// Persisted target matrix: magic "RELA", 1-byte version, 4-byte header
/// length, canonical JSON header, then row-major float32 little-endian
/// payload.
struct TargetStore {
    static constexpr std::uint8_t kVersion = 1;

    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::string prior_id;
    std::uint64_t seed = 0;
    std::optional<PcaModel> pca;
    std::vector<float> payload;  // rows x cols

    static TargetStore from_matrix(const Matrix& m, std::string prior_id, std::uint64_t seed,
                                   std::optional<PcaModel> pca = std::nullopt);
    Matrix to_matrix() const;
    std::span<const float> row(std::size_t r) const { return {payload.data() + r * cols, cols}; }
};

enum class StoreErrorKind { io, corrupt_header, version_mismatch, truncated, integrity };

class StoreError : public std::runtime_error {
public:
    StoreError(StoreErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    StoreErrorKind kind() const { return kind_; }

private:
    StoreErrorKind kind_;
};

void save_target_store(const TargetStore& store, const std::string& path);
TargetStore load_target_store(const std::string& path);

/// Verbatim overlap-rate expression 2 Phi(delta_mu / sqrt(2 (sigma2 + k a))) - 1.
double overlap_paper(double delta_mu, double sigma2, double k, double alpha);

/// Monte-Carlo estimate of the overlap integral min(p1, p2) for two
/// Gaussians with means mu1, mu2 and common std sigma_aug. n must be >= 1e4.
double overlap_mc(double mu1, double mu2, double sigma_aug, std::size_t n, RngStream& rng);

struct OverlapEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

OverlapEstimate overlap_mc_with_error(double mu1, double mu2, double sigma_aug, std::size_t n,
                                      RngStream& rng);

}  // namespace rela
