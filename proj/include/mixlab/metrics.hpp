#ifndef MIXLAB_METRICS_HPP
#define MIXLAB_METRICS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixlab/mixture.hpp"

namespace mixlab {

// n points of dimension d, row-major. Dimension-generic: 2D sample sets and
// external embedding vectors use the same container.
struct FeatureSet {
    int dim = 0;
    std::vector<double> data;

    int size() const { return dim > 0 ? static_cast<int>(data.size()) / dim : 0; }
    std::span<const double> row(int i) const {
        return {data.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
    void push_row(std::span<const double> r);
    void validate() const;

    static FeatureSet from_points(const std::vector<Vec2>& pts);
};

struct KernelConfig {
    double bandwidth = 1.0; // RBF
};

struct KlConfig {
    int ref_samples = 10000;
    std::uint64_t seed = 0;
};

struct PrdcResult {
    double precision = 0.0;
    double density = 0.0;
    double coverage = 0.0;
};

struct MetricReport {
    std::optional<double> kl;
    double fd = 0.0;
    double vendi = 0.0;
    double precision = 0.0;
    double density = 0.0;
    double coverage = 0.0;
    nlohmann::json config; // estimator parameters echoed verbatim

    nlohmann::json to_json() const;
};

// Plug-in estimate of D_KL(p_ref || p_gen): reference samples scored against
// a Gaussian KDE of the generated set (per-dimension Scott bandwidth).
// Clamped below at 0.
double forward_kl(const Mixture& ref, const FeatureSet& gen, const KlConfig& cfg = {});

// Frechet distance between Gaussians fitted to the two sets
// (covariance normalized by 1/(n-1)).
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

// Moment-level form: ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}).
double frechet_from_moments(std::span<const double> mu_a, std::span<const double> cov_a,
                            std::span<const double> mu_b, std::span<const double> cov_b, int d);

// exp(entropy of the eigenvalues of K/n) for the RBF kernel matrix K.
double vendi_score(const FeatureSet& s, const KernelConfig& k = {});

// k-NN manifold metrics per the usual definitions; balls are closed and
// the k-th neighbor excludes the point itself, ties broken by lower index.
PrdcResult precision_density_coverage(const FeatureSet& real, const FeatureSet& gen, int k = 5);

// Uniform subsample without replacement (identity when max_n >= size).
// Used to cap the Vendi eigenproblem at desk scale.
FeatureSet subsample_features(const FeatureSet& s, int max_n, std::uint64_t seed);

FeatureSet load_features_csv(const std::string& path);
FeatureSet load_features_jsonl(const std::string& path);
// Dispatch by extension: .jsonl/.json -> JSONL, otherwise CSV.
FeatureSet load_features(const std::string& path);
void save_features_csv(const FeatureSet& s, const std::string& path);

} // namespace mixlab

#endif
