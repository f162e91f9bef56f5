#include "mixlab/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace mixlab {

using nlohmann::json;

void Mixture::validate() const {
    if (components.empty()) throw DataError("invalid-mixture: component count must be >= 1");
    if (components.size() != weights.size())
        throw DataError("invalid-mixture: component/weight count mismatch");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("invalid-mixture: weights must be finite and nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw DataError("invalid-mixture: weights must sum to 1 within 1e-12");
    for (const auto& c : components) {
        if (!c.mean.finite()) throw DataError("invalid-mixture: non-finite mean");
        if (!c.cov.spd()) throw DataError("invalid-mixture: covariance must be symmetric positive definite");
    }
}

const std::vector<int>& ConceptVocabulary::components_of(const std::string& label) const {
    auto it = entries.find(label);
    if (it == entries.end()) throw DataError("unknown-concept: \"" + label + "\" is not in the vocabulary");
    return it->second;
}

std::string ConceptVocabulary::fine_label_of(int component) const {
    for (const auto& [label, idx] : entries) {
        if (idx.size() == 1 && idx[0] == component) return label;
    }
    throw DataError("unknown-concept: no fine-grained label for component " + std::to_string(component));
}

std::vector<std::string> ConceptVocabulary::general_labels_of(int component) const {
    std::vector<std::string> out;
    for (const auto& [label, idx] : entries) {
        if (idx.size() >= 2 && std::find(idx.begin(), idx.end(), component) != idx.end()) out.push_back(label);
    }
    return out; // map iteration order is already lexicographic
}

void ConceptVocabulary::validate(const Mixture& m) const {
    for (const auto& [label, idx] : entries) {
        if (idx.empty()) throw DataError("invalid-vocabulary: label \"" + label + "\" maps to no components");
        for (int i : idx) {
            if (i < 0 || i >= m.size())
                throw DataError("invalid-vocabulary: label \"" + label + "\" references component " + std::to_string(i));
        }
    }
}

double gaussian_log_pdf(Vec2 x, const GaussianComponent& g) {
    const Mat2 inv = g.cov.inverse();
    const Vec2 d = x - g.mean;
    const double q = d.dot(inv.apply(d));
    return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(g.cov.det()) - 0.5 * q;
}

std::pair<Mixture, ConceptVocabulary> build_quadrant_world() {
    const Mat2 cov = Mat2::diagonal(0.7, 0.7);
    Mixture m;
    m.components = {
        {{-3.0, 3.0}, cov},  // quadrant II: white dog
        {{-3.0, -3.0}, cov}, // quadrant III: black dog
        {{3.0, 3.0}, cov},   // quadrant I: white cat
        {{3.0, -3.0}, cov},  // quadrant IV: black cat
    };
    m.weights = {0.25, 0.25, 0.25, 0.25};
    ConceptVocabulary v;
    v.entries = {
        {"white dog", {0}}, {"black dog", {1}}, {"white cat", {2}}, {"black cat", {3}},
        {"dog", {0, 1}},    {"cat", {2, 3}},    {"white", {0, 2}},  {"black", {1, 3}},
    };
    m.validate();
    v.validate(m);
    return {m, v};
}

Mixture conditional_mixture(const Mixture& m, const ConceptVocabulary& v, const std::string& prompt) {
    const auto& idx = v.components_of(prompt);
    Mixture out;
    double total = 0.0;
    for (int i : idx) total += m.weights.at(static_cast<std::size_t>(i));
    if (total <= 0.0) throw DataError("invalid-mixture: conditional \"" + prompt + "\" has zero prior mass");
    for (int i : idx) {
        out.components.push_back(m.components.at(static_cast<std::size_t>(i)));
        out.weights.push_back(m.weights.at(static_cast<std::size_t>(i)) / total);
    }
    // Renormalize exactly; division already sums to 1 up to rounding.
    out.validate();
    return out;
}

double log_density(const Mixture& m, Vec2 x) {
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(m.components.size());
    for (std::size_t i = 0; i < m.components.size(); ++i) {
        const double lw = m.weights[i] > 0.0 ? std::log(m.weights[i]) : -std::numeric_limits<double>::infinity();
        terms[i] = lw + gaussian_log_pdf(x, m.components[i]);
        max_term = std::max(max_term, terms[i]);
    }
    if (!std::isfinite(max_term)) return max_term;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    return max_term + std::log(acc);
}

Vec2 draw_gaussian(const GaussianComponent& g, RngStream& rng) {
    // Cholesky factor of the 2x2 covariance.
    const double l11 = std::sqrt(g.cov.a);
    const double l21 = g.cov.c / l11;
    const double l22 = std::sqrt(g.cov.d - l21 * l21);
    const Vec2 z = rng.gauss2();
    return {g.mean.x + l11 * z.x, g.mean.y + l21 * z.x + l22 * z.y};
}

int draw_component_index(const Mixture& m, RngStream& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < m.weights.size(); ++i) {
        acc += m.weights[i];
        if (u < acc) return static_cast<int>(i);
    }
    return m.size() - 1;
}

SampleSet sample_mixture(const Mixture& m, int n, RngStream& rng) {
    if (n < 1) throw UsageError("empty-request: sample count must be >= 1");
    m.validate();
    SampleSet s;
    s.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int k = draw_component_index(m, rng);
        s.points.push_back(draw_gaussian(m.components[static_cast<std::size_t>(k)], rng));
    }
    s.meta.sampler = "mixture-direct";
    return s;
}

namespace {

json world_to_json(const Mixture& m, const ConceptVocabulary& v) {
    json comps = json::array();
    for (const auto& c : m.components) {
        comps.push_back({
            {"mean", {c.mean.x, c.mean.y}},
            {"cov", {{c.cov.a, c.cov.b}, {c.cov.c, c.cov.d}}},
        });
    }
    json vocab = json::object();
    for (const auto& [label, idx] : v.entries) vocab[label] = idx;
    return json{{"components", comps}, {"weights", m.weights}, {"vocabulary", vocab}};
}

} // namespace

void save_world_json(const Mixture& m, const ConceptVocabulary& v, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("io-error: cannot open \"" + path + "\" for writing");
    out << world_to_json(m, v).dump(2) << "\n";
}

std::pair<Mixture, ConceptVocabulary> load_world_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("io-error: cannot open \"" + path + "\"");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("io-error: \"" + path + "\" is not valid JSON: " + e.what());
    }
    Mixture m;
    for (const auto& c : j.at("components")) {
        GaussianComponent g;
        g.mean = {c.at("mean").at(0).get<double>(), c.at("mean").at(1).get<double>()};
        const auto& cov = c.at("cov");
        g.cov = {cov.at(0).at(0).get<double>(), cov.at(0).at(1).get<double>(),
                 cov.at(1).at(0).get<double>(), cov.at(1).at(1).get<double>()};
        m.components.push_back(g);
    }
    m.weights = j.at("weights").get<std::vector<double>>();
    ConceptVocabulary v;
    if (j.contains("vocabulary")) {
        for (const auto& [label, idx] : j.at("vocabulary").items()) v.entries[label] = idx.get<std::vector<int>>();
    }
    m.validate();
    v.validate(m);
    return {m, v};
}

void save_samples_csv(const SampleSet& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("io-error: cannot open \"" + path + "\" for writing");
    out << "x,y\n";
    char buf[80];
    for (const Vec2& p : s.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.x, p.y);
        out << buf;
    }
    json manifest{
        {"seed", s.meta.seed},
        {"condition", s.meta.condition},
        {"guidance", s.meta.guidance},
        {"sampler", s.meta.sampler},
        {"n", s.points.size()},
    };
    std::ofstream mout(path + ".manifest.json");
    if (!mout) throw DataError("io-error: cannot open \"" + path + ".manifest.json\" for writing");
    mout << manifest.dump(2) << "\n";
}

SampleSet load_samples_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("io-error: cannot open \"" + path + "\"");
    SampleSet s;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("x,", 0) == 0) continue; // header
        }
        std::istringstream ls(line);
        std::string fx, fy;
        if (!std::getline(ls, fx, ',') || !std::getline(ls, fy, ','))
            throw DataError("io-error: malformed CSV row in \"" + path + "\"");
        s.points.push_back({std::stod(fx), std::stod(fy)});
    }
    std::ifstream min(path + ".manifest.json");
    if (min) {
        json j;
        min >> j;
        s.meta.seed = j.value("seed", 0ULL);
        s.meta.condition = j.value("condition", "");
        s.meta.guidance = j.value("guidance", "");
        s.meta.sampler = j.value("sampler", "");
    }
    return s;
}

} // namespace mixlab
