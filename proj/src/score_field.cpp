#include "mixlab/score_field.hpp"

#include <cmath>
#include <numbers>

namespace mixlab {

void ScoreField::score_batch(std::span<const Vec2> xs, int t, const std::optional<std::string>& condition,
                             std::span<Vec2> out) const {
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = score(xs[i], t, condition);
}

Mixture noised_mixture(const Mixture& m, const NoiseSchedule& s, int t) {
    s.check_step(t);
    const double ab = s.alpha_bar(t);
    const double root_ab = std::sqrt(ab);
    Mixture out;
    out.weights = m.weights;
    out.components.reserve(m.components.size());
    for (const auto& c : m.components) {
        GaussianComponent g;
        g.mean = {root_ab * c.mean.x, root_ab * c.mean.y};
        g.cov = c.cov * ab + Mat2::identity() * (1.0 - ab);
        out.components.push_back(g);
    }
    return out;
}

Vec2 analytic_score(const Mixture& m, const NoiseSchedule& s, Vec2 x, int t,
                    const std::optional<std::string>& condition, const ConceptVocabulary& v) {
    const Mixture base = condition ? conditional_mixture(m, v, *condition) : m;
    const Mixture noised = noised_mixture(base, s, t);
    // Responsibilities via softmax over component log-likelihoods.
    const std::size_t n = noised.components.size();
    std::vector<double> logits(n);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        logits[i] = std::log(noised.weights[i]) + gaussian_log_pdf(x, noised.components[i]);
        max_logit = std::max(max_logit, logits[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(logits[i] - max_logit);
    Vec2 sc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::exp(logits[i] - max_logit) / z;
        const auto& g = noised.components[i];
        const Vec2 d = x - g.mean;
        const Vec2 grad = g.cov.inverse().apply(d);
        sc += (-r) * grad;
    }
    return sc;
}

AnalyticScoreField::AnalyticScoreField(Mixture world, ConceptVocabulary vocab, NoiseSchedule schedule)
    : world_(std::move(world)), vocab_(std::move(vocab)), schedule_(std::move(schedule)) {
    world_.validate();
    vocab_.validate(world_);

    auto build_table = [&](const Mixture& base) {
        ConditionTable tbl;
        tbl.per_t.resize(static_cast<std::size_t>(schedule_.T));
        for (int t = 0; t < schedule_.T; ++t) {
            const Mixture noised = noised_mixture(base, schedule_, t);
            auto& comps = tbl.per_t[static_cast<std::size_t>(t)];
            comps.reserve(noised.components.size());
            for (std::size_t i = 0; i < noised.components.size(); ++i) {
                const auto& g = noised.components[i];
                NoisedComponent nc;
                nc.mean = g.mean;
                nc.inv_cov = g.cov.inverse();
                nc.log_norm = std::log(noised.weights[i]) - std::log(2.0 * std::numbers::pi) - 0.5 * std::log(g.cov.det());
                comps.push_back(nc);
            }
        }
        return tbl;
    };

    unconditional_ = build_table(world_);
    unconditional_.log_prior = 0.0;
    for (const auto& [label, idx] : vocab_.entries) {
        ConditionTable tbl = build_table(conditional_mixture(world_, vocab_, label));
        double prior = 0.0;
        for (int i : idx) prior += world_.weights[static_cast<std::size_t>(i)];
        tbl.log_prior = std::log(prior);
        conditional_.emplace(label, std::move(tbl));
    }
}

const AnalyticScoreField::ConditionTable& AnalyticScoreField::table_for(
    const std::optional<std::string>& condition) const {
    if (!condition) return unconditional_;
    auto it = conditional_.find(*condition);
    if (it == conditional_.end()) throw DataError("unknown-concept: \"" + *condition + "\" is not in the vocabulary");
    return it->second;
}

Vec2 AnalyticScoreField::score_from(const std::vector<NoisedComponent>& comps, Vec2 x) {
    double max_logit = -std::numeric_limits<double>::infinity();
    double logits[16];
    const std::size_t n = comps.size();
    std::vector<double> heap_logits;
    double* lg = logits;
    if (n > 16) {
        heap_logits.resize(n);
        lg = heap_logits.data();
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = comps[i];
        const Vec2 d = x - c.mean;
        lg[i] = c.log_norm - 0.5 * d.dot(c.inv_cov.apply(d));
        max_logit = std::max(max_logit, lg[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(lg[i] - max_logit);
    Vec2 sc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::exp(lg[i] - max_logit) / z;
        const auto& c = comps[i];
        const Vec2 d = x - c.mean;
        sc += (-r) * c.inv_cov.apply(d);
    }
    return sc;
}

double AnalyticScoreField::log_density_from(const std::vector<NoisedComponent>& comps, Vec2 x) {
    double max_logit = -std::numeric_limits<double>::infinity();
    std::vector<double> lg(comps.size());
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const auto& c = comps[i];
        const Vec2 d = x - c.mean;
        lg[i] = c.log_norm - 0.5 * d.dot(c.inv_cov.apply(d));
        max_logit = std::max(max_logit, lg[i]);
    }
    double z = 0.0;
    for (double l : lg) z += std::exp(l - max_logit);
    return max_logit + std::log(z);
}

Vec2 AnalyticScoreField::score(Vec2 x, int t, const std::optional<std::string>& condition) const {
    schedule_.check_step(t);
    return score_from(table_for(condition).per_t[static_cast<std::size_t>(t)], x);
}

double AnalyticScoreField::cond_log_density(Vec2 x, int t, const std::string& label) const {
    schedule_.check_step(t);
    return log_density_from(table_for(label).per_t[static_cast<std::size_t>(t)], x);
}

double AnalyticScoreField::label_log_prior(const std::string& label) const { return table_for(label).log_prior; }

} // namespace mixlab
