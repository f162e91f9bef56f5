#ifndef MIXLAB_SCORE_FIELD_HPP
#define MIXLAB_SCORE_FIELD_HPP

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixlab/mixture.hpp"
#include "mixlab/schedule.hpp"

namespace mixlab {

// Abstract map (point, timestep, optional condition) -> score vector
// grad_x log p_t(x | condition). Implementations must be safe for concurrent
// read access.
struct ScoreField {
    virtual ~ScoreField() = default;

    virtual Vec2 score(Vec2 x, int t, const std::optional<std::string>& condition) const = 0;

    // Batched evaluation; the default loops, network-backed fields override.
    virtual void score_batch(std::span<const Vec2> xs, int t, const std::optional<std::string>& condition,
                             std::span<Vec2> out) const;
};

// Noised conditional likelihoods p(x_t | label) and label priors; needed by
// the exact-likelihood OR weights, which a score-only model cannot supply.
struct LikelihoodOracle {
    virtual ~LikelihoodOracle() = default;
    virtual double cond_log_density(Vec2 x, int t, const std::string& label) const = 0;
    virtual double label_log_prior(const std::string& label) const = 0;
};

// Closed-form forward-noised mixture at step t:
// mean_i -> sqrt(abar_t) mean_i, cov_i -> abar_t cov_i + (1-abar_t) I.
Mixture noised_mixture(const Mixture& m, const NoiseSchedule& s, int t);

// Exact score of the noised (conditional) mixture at x, computed through
// component responsibilities. Unconditional when condition is absent.
Vec2 analytic_score(const Mixture& m, const NoiseSchedule& s, Vec2 x, int t,
                    const std::optional<std::string>& condition, const ConceptVocabulary& v);

// ScoreField over the analytic world; precomputes the noised component
// parameters for every (condition, t) at construction so evaluation is pure
// table lookups plus a softmax.
class AnalyticScoreField : public ScoreField, public LikelihoodOracle {
public:
    AnalyticScoreField(Mixture world, ConceptVocabulary vocab, NoiseSchedule schedule);

    Vec2 score(Vec2 x, int t, const std::optional<std::string>& condition) const override;
    double cond_log_density(Vec2 x, int t, const std::string& label) const override;
    double label_log_prior(const std::string& label) const override;

    const Mixture& world() const { return world_; }
    const ConceptVocabulary& vocabulary() const { return vocab_; }
    const NoiseSchedule& schedule() const { return schedule_; }

private:
    struct NoisedComponent {
        Vec2 mean;
        Mat2 inv_cov;
        double log_norm; // log w_i - log 2pi - 0.5 log det
    };
    struct ConditionTable {
        std::vector<std::vector<NoisedComponent>> per_t;
        double log_prior = 0.0;
    };

    const ConditionTable& table_for(const std::optional<std::string>& condition) const;
    static Vec2 score_from(const std::vector<NoisedComponent>& comps, Vec2 x);
    static double log_density_from(const std::vector<NoisedComponent>& comps, Vec2 x);

    Mixture world_;
    ConceptVocabulary vocab_;
    NoiseSchedule schedule_;
    ConditionTable unconditional_;
    std::map<std::string, ConditionTable> conditional_;
};

} // namespace mixlab

#endif
