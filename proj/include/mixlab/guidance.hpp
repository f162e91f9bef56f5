#ifndef MIXLAB_GUIDANCE_HPP
#define MIXLAB_GUIDANCE_HPP

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mixlab/mixture.hpp"
#include "mixlab/rng.hpp"
#include "mixlab/schedule.hpp"
#include "mixlab/score_field.hpp"

namespace mixlab {

// Guidance variants. Every advanced variant reduces to plain CFG under its
// degenerate parameters (APG: eta=1, beta=0, r=inf; CADS: s=0; Interval:
// [0,1]); the sampler guarantees the reduction is exact, not approximate.
// Defaults follow the first column of the reference hyperparameter tables.
struct CfgGuidance {
    double omega = 1.0;
};

struct ApgGuidance {
    double eta = 0.0;
    double rescale_r = 7.5;
    double momentum_beta = -0.75;
    double omega = 1.0;
};

struct CadsGuidance {
    double tau1 = 0.8;
    double tau2 = 1.3; // > 1 keeps some conditioning at t = 1
    double noise_scale = 0.1;
    double mix_phi = 1.0;
    double omega = 1.0;
};

struct IntervalGuidance {
    double tau_lo = 0.08;
    double tau_hi = 0.81;
    double omega = 1.0;
};

using GuidanceConfig = std::variant<CfgGuidance, ApgGuidance, CadsGuidance, IntervalGuidance>;

void validate_guidance(const GuidanceConfig& g);
double guidance_omega(const GuidanceConfig& g);
std::string describe_guidance(const GuidanceConfig& g);

enum class ComposeOp { Or, And };
enum class OrWeighting { ExactLikelihood, Uniform };

struct CompositionSpec {
    ComposeOp op = ComposeOp::Or;
    std::vector<std::string> labels;
    OrWeighting weighting = OrWeighting::Uniform;

    void validate() const;
    std::string describe() const;
};

// s_u + omega (s_c - s_u), computed in the extrapolation form
// s_c + (omega - 1)(s_c - s_u) so omega = 1 returns the conditional score
// exactly. Deliberately not inline: one compiled instance keeps rounding
// identical across every guidance path.
Vec2 cfg_combine(Vec2 s_u, Vec2 s_c, double omega);

Vec2 cfg_score(const ScoreField& field, Vec2 x, int t, const std::string& condition, double omega);

// Likelihood weights for the exact OR operator: softmax over
// log prior(label) + log p(x_t | label), recomputed at the current x_t.
std::vector<double> or_weights(const LikelihoodOracle& oracle, std::span<const std::string> labels, Vec2 x, int t);

// Likelihood-weighted (or uniform) sum of fine-grained conditional scores.
Vec2 or_compose(std::span<const Vec2> fine_scores, std::span<const double> weights);
Vec2 or_compose_at(const ScoreField& field, std::span<const std::string> labels, OrWeighting mode,
                   const LikelihoodOracle* oracle, Vec2 x, int t);

// s_u + sum_i (s(x,t|c_i) - s_u)
Vec2 and_compose(std::span<const Vec2> general_scores, Vec2 s_u);
Vec2 and_compose_at(const ScoreField& field, std::span<const std::string> labels, Vec2 x, int t);

// APG keeps a momentum vector per trajectory (zero-initialized).
struct ApgState {
    Vec2 momentum{0.0, 0.0};
};

Vec2 apg_guided_score(ApgState& state, Vec2 s_c, Vec2 s_u, const ApgGuidance& cfg);

// Annealing weight gamma(t_norm): 1 up to tau1, linear down to 0 at tau2,
// 0 beyond. tau2 > 1 is allowed (gamma stays positive at t_norm = 1).
double cads_condition_weight(double t_norm, double tau1, double tau2);

// sqrt(gamma) s_c + s sqrt(1-gamma) n, blended by phi. No corruption (and no
// draw) when s == 0 or gamma == 1, which keeps those cases exactly CFG.
Vec2 cads_effective_conditional(Vec2 s_c, double gamma, const CadsGuidance& cfg, RngStream& rng);

Vec2 cads_guided_score(const ScoreField& field, Vec2 x, int t, const std::string& condition,
                       const CadsGuidance& cfg, RngStream& rng, const NoiseSchedule& s);

Vec2 interval_guided_score(const ScoreField& field, Vec2 x, int t, const std::string& condition,
                           const IntervalGuidance& cfg, const NoiseSchedule& s);

// Fine-grained label drawn with probability proportional to the prior mass
// of the components the general label covers.
std::string oracle_prompt_expand(const std::string& general_label, const ConceptVocabulary& v, const Mixture& m,
                                 RngStream& rng);

struct SamplerOptions {
    GuidanceConfig guidance = CfgGuidance{};
    std::optional<CompositionSpec> compose;
    std::optional<std::string> condition;
    bool expand_oracle = false;
    bool tilde_variance = false; // posterior variance beta_tilde instead of beta
    int n = 1;
    std::uint64_t seed = 0;

    // Exact-likelihood OR weights need a likelihood oracle; prompt expansion
    // needs the world priors and vocabulary.
    const LikelihoodOracle* oracle = nullptr;
    const Mixture* world = nullptr;
    const ConceptVocabulary* vocab = nullptr;
};

// DDPM ancestral sampler. Trajectory i draws its noise from the substream
// (seed, "sample-noise", i) and CADS corruption from (seed, "sample-cads", i),
// so results match sequential execution for any batching or thread count.
SampleSet ancestral_sample(const ScoreField& field, const NoiseSchedule& s, const SamplerOptions& opt);

} // namespace mixlab

#endif
