#include "mixlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mixlab/linalg.hpp"
#include "mixlab/rng.hpp"

namespace mixlab {

using nlohmann::json;

void FeatureSet::push_row(std::span<const double> r) {
    if (dim == 0) dim = static_cast<int>(r.size());
    if (static_cast<int>(r.size()) != dim) throw DataError("feature-set: inconsistent row dimension");
    data.insert(data.end(), r.begin(), r.end());
}

void FeatureSet::validate() const {
    if (dim < 1) throw DataError("feature-set: dimension must be >= 1");
    if (data.size() % static_cast<std::size_t>(dim) != 0) throw DataError("feature-set: ragged data");
    for (double v : data)
        if (!std::isfinite(v)) throw DataError("feature-set: non-finite entry");
}

FeatureSet FeatureSet::from_points(const std::vector<Vec2>& pts) {
    FeatureSet s;
    s.dim = 2;
    s.data.reserve(pts.size() * 2);
    for (const Vec2& p : pts) {
        s.data.push_back(p.x);
        s.data.push_back(p.y);
    }
    return s;
}

json MetricReport::to_json() const {
    json j;
    if (kl) j["kl"] = *kl;
    j["fd"] = fd;
    j["vendi"] = vendi;
    j["precision"] = precision;
    j["density"] = density;
    j["coverage"] = coverage;
    j["config"] = config;
    return j;
}

double forward_kl(const Mixture& ref, const FeatureSet& gen, const KlConfig& cfg) {
    gen.validate();
    if (gen.dim != 2) throw DataError("forward-kl: generated set must be 2-dimensional to compare with a mixture");
    const int n = gen.size();
    if (n < 10) throw DataError("insufficient-samples: forward KL needs >= 10 generated points");

    // Scott's rule applied per dimension, i.e. each coordinate bandwidthed as
    // its own one-dimensional problem (n^(-1/5)). The multivariate exponent
    // n^(-1/(d+4)) oversmooths well-separated mixtures enough to put a ~0.05
    // bias floor under the self-KL of a bimodal reference.
    const int d = gen.dim;
    std::vector<double> h(static_cast<std::size_t>(d));
    const double rate = std::pow(static_cast<double>(n), -1.0 / 5.0);
    for (int j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += gen.row(i)[static_cast<std::size_t>(j)];
        mean /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dv = gen.row(i)[static_cast<std::size_t>(j)] - mean;
            var += dv * dv;
        }
        var /= std::max(1, n - 1);
        h[static_cast<std::size_t>(j)] = std::max(std::sqrt(var) * rate, 1e-12);
    }
    double log_norm = -std::log(static_cast<double>(n));
    for (int j = 0; j < d; ++j) log_norm -= std::log(h[static_cast<std::size_t>(j)] * std::sqrt(2.0 * std::numbers::pi));

    RngStream rng(substream_seed(cfg.seed, "kl-ref"));
    const int m = cfg.ref_samples;
    if (m < 1) throw UsageError("forward-kl: ref_samples must be >= 1");
    std::vector<Vec2> xs(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const int c = draw_component_index(ref, rng);
        xs[static_cast<std::size_t>(i)] = draw_gaussian(ref.components[static_cast<std::size_t>(c)], rng);
    }

    std::vector<double> diffs(static_cast<std::size_t>(m));
    const double inv2hx = 1.0 / (2.0 * h[0] * h[0]);
    const double inv2hy = 1.0 / (2.0 * h[1] * h[1]);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const Vec2 x = xs[static_cast<std::size_t>(i)];
        double max_e = -std::numeric_limits<double>::infinity();
        for (int g = 0; g < n; ++g) {
            const auto r = gen.row(g);
            const double dx = x.x - r[0];
            const double dy = x.y - r[1];
            const double e = -(dx * dx * inv2hx + dy * dy * inv2hy);
            if (e > max_e) max_e = e;
        }
        double acc = 0.0;
        for (int g = 0; g < n; ++g) {
            const auto r = gen.row(g);
            const double dx = x.x - r[0];
            const double dy = x.y - r[1];
            acc += std::exp(-(dx * dx * inv2hx + dy * dy * inv2hy) - max_e);
        }
        const double log_p_gen = log_norm + max_e + std::log(acc);
        diffs[static_cast<std::size_t>(i)] = log_density(ref, x) - log_p_gen;
    }
    double mean_diff = 0.0;
    for (double v : diffs) mean_diff += v;
    mean_diff /= m;
    return std::max(0.0, mean_diff);
}

namespace {

void fit_moments(const FeatureSet& s, std::vector<double>& mu, std::vector<double>& cov) {
    const int n = s.size();
    const int d = s.dim;
    mu.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < n; ++i) {
        const auto r = s.row(i);
        for (int j = 0; j < d; ++j) mu[static_cast<std::size_t>(j)] += r[static_cast<std::size_t>(j)];
    }
    for (double& v : mu) v /= n;
    cov.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i) {
        const auto r = s.row(i);
        for (int a = 0; a < d; ++a) {
            const double da = r[static_cast<std::size_t>(a)] - mu[static_cast<std::size_t>(a)];
            for (int b = a; b < d; ++b) {
                const double db = r[static_cast<std::size_t>(b)] - mu[static_cast<std::size_t>(b)];
                cov[static_cast<std::size_t>(a) * d + b] += da * db;
            }
        }
    }
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            cov[static_cast<std::size_t>(a) * d + b] /= (n - 1);
            cov[static_cast<std::size_t>(b) * d + a] = cov[static_cast<std::size_t>(a) * d + b];
        }
}

// B = sum_i sqrt(lambda_i) v_i v_i^T for the SPD part of A.
std::vector<double> sqrt_psd(std::span<const double> a, int d) {
    std::vector<double> work(a.begin(), a.end());
    std::vector<double> vecs;
    const std::vector<double> values = jacobi_eigen(std::move(work), d, &vecs);
    for (double lv : values)
        if (lv < -1e-8) throw NumericError("frechet: covariance has eigenvalue " + std::to_string(lv));
    std::vector<double> out(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        const double lv = std::sqrt(std::max(0.0, values[static_cast<std::size_t>(i)]));
        const double* v = vecs.data() + static_cast<std::size_t>(i) * d;
        for (int a2 = 0; a2 < d; ++a2)
            for (int b = 0; b < d; ++b) out[static_cast<std::size_t>(a2) * d + b] += lv * v[a2] * v[b];
    }
    return out;
}

std::vector<double> mat_mul(std::span<const double> a, std::span<const double> b, int d) {
    std::vector<double> c(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            const double aik = a[static_cast<std::size_t>(i) * d + k];
            for (int j = 0; j < d; ++j) c[static_cast<std::size_t>(i) * d + j] += aik * b[static_cast<std::size_t>(k) * d + j];
        }
    return c;
}

} // namespace

double frechet_from_moments(std::span<const double> mu_a, std::span<const double> cov_a,
                            std::span<const double> mu_b, std::span<const double> cov_b, int d) {
    double mean_term = 0.0;
    for (int j = 0; j < d; ++j) {
        const double dj = mu_a[static_cast<std::size_t>(j)] - mu_b[static_cast<std::size_t>(j)];
        mean_term += dj * dj;
    }
    double trace_a = 0.0, trace_b = 0.0;
    for (int j = 0; j < d; ++j) {
        trace_a += cov_a[static_cast<std::size_t>(j) * d + j];
        trace_b += cov_b[static_cast<std::size_t>(j) * d + j];
    }
    // Tr (Sa Sb)^{1/2} via the symmetric product Sa^{1/2} Sb Sa^{1/2}.
    const std::vector<double> root_a = sqrt_psd(cov_a, d);
    std::vector<double> m = mat_mul(root_a, mat_mul(cov_b, root_a, d), d);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const double s = 0.5 * (m[static_cast<std::size_t>(i) * d + j] + m[static_cast<std::size_t>(j) * d + i]);
            m[static_cast<std::size_t>(i) * d + j] = s;
            m[static_cast<std::size_t>(j) * d + i] = s;
        }
    const std::vector<double> values = jacobi_eigen(std::move(m), d);
    double trace_sqrt = 0.0;
    for (double lv : values) {
        if (lv < -1e-8) throw NumericError("frechet: cross-covariance has eigenvalue " + std::to_string(lv));
        trace_sqrt += std::sqrt(std::max(0.0, lv));
    }
    return std::max(0.0, mean_term + trace_a + trace_b - 2.0 * trace_sqrt);
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    a.validate();
    b.validate();
    if (a.dim != b.dim) throw DataError("frechet: dimension mismatch");
    if (a.size() < a.dim + 1 || b.size() < b.dim + 1)
        throw DataError("frechet: each set needs at least d+1 points for moment fitting");
    std::vector<double> mu_a, cov_a, mu_b, cov_b;
    fit_moments(a, mu_a, cov_a);
    fit_moments(b, mu_b, cov_b);
    return frechet_from_moments(mu_a, cov_a, mu_b, cov_b, a.dim);
}

double vendi_score(const FeatureSet& s, const KernelConfig& k) {
    s.validate();
    if (k.bandwidth <= 0.0) throw UsageError("vendi: bandwidth must be positive");
    const int n = s.size();
    if (n < 1) throw DataError("vendi: empty feature set");
    const double inv2s = 1.0 / (2.0 * k.bandwidth * k.bandwidth);
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> km(static_cast<std::size_t>(n) * n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        km[static_cast<std::size_t>(i) * n + i] = inv_n;
        const auto ri = s.row(i);
        for (int j = i + 1; j < n; ++j) {
            const auto rj = s.row(j);
            double d2 = 0.0;
            for (int c = 0; c < s.dim; ++c) {
                const double dv = ri[static_cast<std::size_t>(c)] - rj[static_cast<std::size_t>(c)];
                d2 += dv * dv;
            }
            const double v = std::exp(-d2 * inv2s) * inv_n;
            km[static_cast<std::size_t>(i) * n + j] = v;
            km[static_cast<std::size_t>(j) * n + i] = v;
        }
    }
    const std::vector<double> values = jacobi_eigen(std::move(km), n);
    double entropy = 0.0;
    for (double lv : values) {
        if (lv < -1e-10) throw NumericError("vendi: kernel eigenvalue " + std::to_string(lv) + " below PSD tolerance");
        if (lv <= 0.0) continue; // 0 log 0 = 0
        entropy -= lv * std::log(lv);
    }
    return std::exp(entropy);
}

PrdcResult precision_density_coverage(const FeatureSet& real, const FeatureSet& gen, int k) {
    real.validate();
    gen.validate();
    if (real.dim != gen.dim) throw DataError("prdc: dimension mismatch");
    if (k < 1) throw UsageError("prdc: k must be >= 1");
    const int nr = real.size();
    const int ng = gen.size();
    if (nr <= k || ng <= k) throw DataError("prdc: k >= set size");

    auto sqdist = [&](std::span<const double> a, std::span<const double> b) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) {
            const double dv = a[c] - b[c];
            d2 += dv * dv;
        }
        return d2;
    };

    // Squared radius of the k-th nearest real neighbor (self excluded, ties by
    // lower index).
    std::vector<double> r2(static_cast<std::size_t>(nr));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < nr; ++i) {
        std::vector<std::pair<double, int>> d(static_cast<std::size_t>(nr - 1));
        int w = 0;
        for (int j = 0; j < nr; ++j) {
            if (j == i) continue;
            d[static_cast<std::size_t>(w++)] = {sqdist(real.row(i), real.row(j)), j};
        }
        std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
        r2[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(k - 1)].first;
    }

    std::vector<int> gen_hits(static_cast<std::size_t>(ng), 0);
    std::vector<char> real_covered(static_cast<std::size_t>(nr), 0);
#pragma omp parallel for schedule(static)
    for (int g = 0; g < ng; ++g) {
        int hits = 0;
        for (int i = 0; i < nr; ++i) {
            if (sqdist(gen.row(g), real.row(i)) <= r2[static_cast<std::size_t>(i)]) ++hits;
        }
        gen_hits[static_cast<std::size_t>(g)] = hits;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < nr; ++i) {
        for (int g = 0; g < ng; ++g) {
            if (sqdist(gen.row(g), real.row(i)) <= r2[static_cast<std::size_t>(i)]) {
                real_covered[static_cast<std::size_t>(i)] = 1;
                break;
            }
        }
    }

    PrdcResult out;
    long long total_hits = 0;
    int inside = 0;
    for (int g = 0; g < ng; ++g) {
        total_hits += gen_hits[static_cast<std::size_t>(g)];
        if (gen_hits[static_cast<std::size_t>(g)] > 0) ++inside;
    }
    int covered = 0;
    for (int i = 0; i < nr; ++i) covered += real_covered[static_cast<std::size_t>(i)];
    out.precision = static_cast<double>(inside) / ng;
    out.density = static_cast<double>(total_hits) / (static_cast<double>(k) * ng);
    out.coverage = static_cast<double>(covered) / nr;
    return out;
}

FeatureSet subsample_features(const FeatureSet& s, int max_n, std::uint64_t seed) {
    const int n = s.size();
    if (max_n < 1) throw UsageError("subsample: max_n must be >= 1");
    if (n <= max_n) return s;
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    RngStream rng(substream_seed(seed, "feature-subsample"));
    for (int i = 0; i < max_n; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(max_n));
    std::sort(idx.begin(), idx.end());
    FeatureSet out;
    out.dim = s.dim;
    for (int i : idx) out.push_row(s.row(i));
    return out;
}

FeatureSet load_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("io-error: cannot open \"" + path + "\"");
    FeatureSet s;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string field;
        bool numeric = true;
        while (std::getline(ls, field, ',')) {
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(field, &pos));
                if (pos == 0) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (first && !numeric) {
            first = false; // header row
            continue;
        }
        first = false;
        if (!numeric) throw DataError("io-error: non-numeric CSV row in \"" + path + "\"");
        s.push_row(row);
    }
    if (s.size() == 0) throw DataError("io-error: \"" + path + "\" holds no feature rows");
    s.validate();
    return s;
}

FeatureSet load_features_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("io-error: cannot open \"" + path + "\"");
    FeatureSet s;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("io-error: bad JSONL line in \"" + path + "\": " + e.what());
        }
        std::vector<double> row;
        if (j.is_array())
            row = j.get<std::vector<double>>();
        else if (j.is_object() && j.contains("embedding"))
            row = j.at("embedding").get<std::vector<double>>();
        else
            throw DataError("io-error: JSONL line must be an array or hold an \"embedding\" field");
        s.push_row(row);
    }
    if (s.size() == 0) throw DataError("io-error: \"" + path + "\" holds no feature rows");
    s.validate();
    return s;
}

FeatureSet load_features(const std::string& path) {
    if (path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0) return load_features_jsonl(path);
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) return load_features_jsonl(path);
    return load_features_csv(path);
}

void save_features_csv(const FeatureSet& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("io-error: cannot open \"" + path + "\" for writing");
    char buf[40];
    for (int i = 0; i < s.size(); ++i) {
        const auto r = s.row(i);
        for (int j = 0; j < s.dim; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", r[static_cast<std::size_t>(j)]);
            out << buf << (j + 1 == s.dim ? "\n" : ",");
        }
    }
}

} // namespace mixlab
