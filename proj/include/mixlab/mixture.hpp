#ifndef MIXLAB_MIXTURE_HPP
#define MIXLAB_MIXTURE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mixlab/geometry.hpp"
#include "mixlab/rng.hpp"

namespace mixlab {

struct GaussianComponent {
    Vec2 mean;
    Mat2 cov; // SPD
};

// Weighted mixture of 2D Gaussians. Immutable by convention after
// construction; validate() is called by every factory in this module.
struct Mixture {
    std::vector<GaussianComponent> components;
    std::vector<double> weights;

    void validate() const;
    int size() const { return static_cast<int>(components.size()); }
};

// Prompt label -> set of component indices. Fine-grained labels map to
// singletons, general labels to two or more components.
struct ConceptVocabulary {
    std::map<std::string, std::vector<int>> entries;

    bool contains(const std::string& label) const { return entries.count(label) > 0; }
    const std::vector<int>& components_of(const std::string& label) const;
    bool is_general(const std::string& label) const { return components_of(label).size() >= 2; }

    // Fine-grained label whose singleton set is {component}; throws if none.
    std::string fine_label_of(int component) const;
    // All general labels covering `component`, in lexicographic order.
    std::vector<std::string> general_labels_of(int component) const;

    void validate(const Mixture& m) const;
};

struct SampleMeta {
    std::string condition;  // empty = unconditional
    std::string guidance;   // human-readable guidance/sampler description
    std::uint64_t seed = 0;
    std::string sampler;
};

struct SampleSet {
    std::vector<Vec2> points;
    SampleMeta meta;
};

// log N(x; mean, cov) for one 2D Gaussian.
double gaussian_log_pdf(Vec2 x, const GaussianComponent& g);

// Quadrant world: four equal-weight components centered in the four
// quadrants, covariance 0.7*I, with the cat/dog/white/black vocabulary.
std::pair<Mixture, ConceptVocabulary> build_quadrant_world();

// Mixture restricted to the prompt's components, weights renormalized.
Mixture conditional_mixture(const Mixture& m, const ConceptVocabulary& v, const std::string& prompt);

// log sum_i w_i N(x; mu_i, cov_i), evaluated with log-sum-exp.
double log_density(const Mixture& m, Vec2 x);

// One draw from a single Gaussian component.
Vec2 draw_gaussian(const GaussianComponent& g, RngStream& rng);
// Component index drawn by mixture weight.
int draw_component_index(const Mixture& m, RngStream& rng);

// n i.i.d. draws; deterministic given the stream state.
SampleSet sample_mixture(const Mixture& m, int n, RngStream& rng);

// World JSON: {"components":[{"mean":[x,y],"cov":[[a,b],[b,d]]}...],
//              "weights":[...], "vocabulary":{"label":[indices...]}}
void save_world_json(const Mixture& m, const ConceptVocabulary& v, const std::string& path);
std::pair<Mixture, ConceptVocabulary> load_world_json(const std::string& path);

// CSV "x,y" rows plus a <path>.manifest.json sidecar with the metadata.
void save_samples_csv(const SampleSet& s, const std::string& path);
SampleSet load_samples_csv(const std::string& path);

} // namespace mixlab

#endif
