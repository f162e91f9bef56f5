#include "mixlab/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace mixlab {

namespace {

Vec2 extrapolate(Vec2 base, double w, Vec2 dir) { return {base.x + w * dir.x, base.y + w * dir.y}; }

void require(bool ok, const char* msg) {
    if (!ok) throw UsageError(std::string("invalid-guidance: ") + msg);
}

} // namespace

void validate_guidance(const GuidanceConfig& g) {
    std::visit(
        [](const auto& cfg) {
            using T = std::decay_t<decltype(cfg)>;
            require(cfg.omega >= 0.0 && std::isfinite(cfg.omega), "omega must be finite and >= 0");
            if constexpr (std::is_same_v<T, ApgGuidance>) {
                require(cfg.rescale_r > 0.0, "APG rescale threshold must be positive");
                require(std::isfinite(cfg.eta) && std::isfinite(cfg.momentum_beta), "APG eta/beta must be finite");
            } else if constexpr (std::is_same_v<T, CadsGuidance>) {
                require(cfg.tau1 <= cfg.tau2, "CADS needs tau1 <= tau2");
                require(cfg.noise_scale >= 0.0, "CADS noise scale must be >= 0");
                require(cfg.mix_phi >= 0.0 && cfg.mix_phi <= 1.0, "CADS mixing factor must be in [0,1]");
            } else if constexpr (std::is_same_v<T, IntervalGuidance>) {
                require(cfg.tau_lo <= cfg.tau_hi, "interval needs tau_lo <= tau_hi");
            }
        },
        g);
}

double guidance_omega(const GuidanceConfig& g) {
    return std::visit([](const auto& cfg) { return cfg.omega; }, g);
}

std::string describe_guidance(const GuidanceConfig& g) {
    std::ostringstream os;
    std::visit(
        [&](const auto& cfg) {
            using T = std::decay_t<decltype(cfg)>;
            if constexpr (std::is_same_v<T, CfgGuidance>)
                os << "cfg:omega=" << cfg.omega;
            else if constexpr (std::is_same_v<T, ApgGuidance>)
                os << "apg:eta=" << cfg.eta << ",r=" << cfg.rescale_r << ",beta=" << cfg.momentum_beta
                   << ",omega=" << cfg.omega;
            else if constexpr (std::is_same_v<T, CadsGuidance>)
                os << "cads:tau1=" << cfg.tau1 << ",tau2=" << cfg.tau2 << ",s=" << cfg.noise_scale
                   << ",phi=" << cfg.mix_phi << ",omega=" << cfg.omega;
            else
                os << "interval:lo=" << cfg.tau_lo << ",hi=" << cfg.tau_hi << ",omega=" << cfg.omega;
        },
        g);
    return os.str();
}

void CompositionSpec::validate() const {
    if (op == ComposeOp::Or && labels.size() < 2) throw UsageError("invalid-composition: OR needs >= 2 constituents");
    if (op == ComposeOp::And && labels.empty()) throw UsageError("invalid-composition: AND needs >= 1 constituent");
}

std::string CompositionSpec::describe() const {
    std::ostringstream os;
    os << (op == ComposeOp::Or ? (weighting == OrWeighting::ExactLikelihood ? "or-exact" : "or-uniform") : "and") << ":";
    for (std::size_t i = 0; i < labels.size(); ++i) os << (i ? "," : "") << labels[i];
    return os.str();
}

Vec2 cfg_combine(Vec2 s_u, Vec2 s_c, double omega) { return extrapolate(s_c, omega - 1.0, s_c - s_u); }

Vec2 cfg_score(const ScoreField& field, Vec2 x, int t, const std::string& condition, double omega) {
    const Vec2 s_c = field.score(x, t, condition);
    const Vec2 s_u = field.score(x, t, std::nullopt);
    return cfg_combine(s_u, s_c, omega);
}

std::vector<double> or_weights(const LikelihoodOracle& oracle, std::span<const std::string> labels, Vec2 x, int t) {
    std::vector<double> logits(labels.size());
    double max_l = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        logits[i] = oracle.label_log_prior(labels[i]) + oracle.cond_log_density(x, t, labels[i]);
        max_l = std::max(max_l, logits[i]);
    }
    double z = 0.0;
    for (double& l : logits) {
        l = std::exp(l - max_l);
        z += l;
    }
    for (double& l : logits) l /= z;
    return logits;
}

Vec2 or_compose(std::span<const Vec2> fine_scores, std::span<const double> weights) {
    Vec2 out{0.0, 0.0};
    for (std::size_t i = 0; i < fine_scores.size(); ++i) out += weights[i] * fine_scores[i];
    return out;
}

Vec2 or_compose_at(const ScoreField& field, std::span<const std::string> labels, OrWeighting mode,
                   const LikelihoodOracle* oracle, Vec2 x, int t) {
    if (labels.size() < 2) throw UsageError("invalid-composition: OR needs >= 2 constituents");
    std::vector<Vec2> scores(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) scores[i] = field.score(x, t, labels[i]);
    if (mode == OrWeighting::Uniform) {
        const std::vector<double> w(labels.size(), 1.0 / static_cast<double>(labels.size()));
        return or_compose(scores, w);
    }
    if (!oracle) throw DataError("missing-oracle: exact-likelihood OR weights need a mixture likelihood oracle");
    return or_compose(scores, or_weights(*oracle, labels, x, t));
}

Vec2 and_compose(std::span<const Vec2> general_scores, Vec2 s_u) {
    Vec2 out = s_u;
    for (const Vec2& s : general_scores) out += s - s_u;
    return out;
}

Vec2 and_compose_at(const ScoreField& field, std::span<const std::string> labels, Vec2 x, int t) {
    if (labels.empty()) throw UsageError("invalid-composition: AND needs >= 1 constituent");
    std::vector<Vec2> scores(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) scores[i] = field.score(x, t, labels[i]);
    return and_compose(scores, field.score(x, t, std::nullopt));
}

Vec2 apg_guided_score(ApgState& state, Vec2 s_c, Vec2 s_u, const ApgGuidance& cfg) {
    const Vec2 delta = s_c - s_u;
    state.momentum = delta + cfg.momentum_beta * state.momentum;
    const Vec2 m = state.momentum;
    Vec2 u;
    if (cfg.eta == 1.0) {
        // parallel + orthogonal parts recombine to m itself; taking m directly
        // keeps the CFG reduction exact.
        u = m;
    } else {
        const double sc_norm = s_c.norm();
        if (sc_norm < 1e-12) {
            u = m; // treat everything as orthogonal
        } else {
            const Vec2 unit{s_c.x / sc_norm, s_c.y / sc_norm};
            const Vec2 par = m.dot(unit) * unit;
            const Vec2 perp = m - par;
            u = perp + cfg.eta * par;
        }
    }
    const double u_norm = u.norm();
    if (u_norm > cfg.rescale_r) u = (cfg.rescale_r / u_norm) * u;
    return extrapolate(s_c, cfg.omega - 1.0, u);
}

double cads_condition_weight(double t_norm, double tau1, double tau2) {
    if (tau1 > tau2) throw UsageError("invalid-guidance: CADS needs tau1 <= tau2");
    if (t_norm <= tau1) return 1.0;
    if (t_norm >= tau2) return 0.0;
    return (tau2 - t_norm) / (tau2 - tau1);
}

Vec2 cads_effective_conditional(Vec2 s_c, double gamma, const CadsGuidance& cfg, RngStream& rng) {
    if (cfg.noise_scale == 0.0 || gamma >= 1.0) return s_c;
    const Vec2 noise = rng.gauss2();
    const double root_g = std::sqrt(gamma);
    const double noise_c = cfg.noise_scale * std::sqrt(1.0 - gamma);
    const Vec2 corrupted{root_g * s_c.x + noise_c * noise.x, root_g * s_c.y + noise_c * noise.y};
    return {cfg.mix_phi * corrupted.x + (1.0 - cfg.mix_phi) * s_c.x,
            cfg.mix_phi * corrupted.y + (1.0 - cfg.mix_phi) * s_c.y};
}

Vec2 cads_guided_score(const ScoreField& field, Vec2 x, int t, const std::string& condition,
                       const CadsGuidance& cfg, RngStream& rng, const NoiseSchedule& s) {
    const Vec2 s_c = field.score(x, t, condition);
    const Vec2 s_u = field.score(x, t, std::nullopt);
    const double gamma = cads_condition_weight(s.t_norm(t), cfg.tau1, cfg.tau2);
    return cfg_combine(s_u, cads_effective_conditional(s_c, gamma, cfg, rng), cfg.omega);
}

Vec2 interval_guided_score(const ScoreField& field, Vec2 x, int t, const std::string& condition,
                           const IntervalGuidance& cfg, const NoiseSchedule& s) {
    const double tn = s.t_norm(t);
    if (tn < cfg.tau_lo || tn > cfg.tau_hi) return field.score(x, t, std::nullopt);
    return cfg_combine(field.score(x, t, std::nullopt), field.score(x, t, condition), cfg.omega);
}

std::string oracle_prompt_expand(const std::string& general_label, const ConceptVocabulary& v, const Mixture& m,
                                 RngStream& rng) {
    const auto& idx = v.components_of(general_label);
    if (idx.size() < 2)
        throw DataError("already-fine-grained: \"" + general_label + "\" maps to a single component");
    double total = 0.0;
    for (int i : idx) total += m.weights.at(static_cast<std::size_t>(i));
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int chosen = idx.back();
    for (int i : idx) {
        acc += m.weights.at(static_cast<std::size_t>(i));
        if (u < acc) {
            chosen = i;
            break;
        }
    }
    return v.fine_label_of(chosen);
}

namespace {

// Per-point guided score; the single switch shared by every sampler run.
Vec2 guided_point_score(const GuidanceConfig& g, Vec2 s_u, Vec2 s_c, double t_norm, ApgState& apg_state,
                        RngStream* cads_rng) {
    return std::visit(
        [&](const auto& cfg) -> Vec2 {
            using T = std::decay_t<decltype(cfg)>;
            if constexpr (std::is_same_v<T, CfgGuidance>) {
                return cfg_combine(s_u, s_c, cfg.omega);
            } else if constexpr (std::is_same_v<T, ApgGuidance>) {
                return apg_guided_score(apg_state, s_c, s_u, cfg);
            } else if constexpr (std::is_same_v<T, CadsGuidance>) {
                const double gamma = cads_condition_weight(t_norm, cfg.tau1, cfg.tau2);
                return cfg_combine(s_u, cads_effective_conditional(s_c, gamma, cfg, *cads_rng), cfg.omega);
            } else {
                if (t_norm < cfg.tau_lo || t_norm > cfg.tau_hi) return s_u;
                return cfg_combine(s_u, s_c, cfg.omega);
            }
        },
        g);
}

} // namespace

SampleSet ancestral_sample(const ScoreField& field, const NoiseSchedule& sched, const SamplerOptions& opt) {
    if (opt.n < 1) throw UsageError("empty-request: sample count must be >= 1");
    validate_guidance(opt.guidance);
    if (opt.compose) opt.compose->validate();
    if (opt.expand_oracle) {
        if (!opt.condition) throw UsageError("expand-oracle needs a general condition label");
        if (opt.compose) throw UsageError("expand-oracle cannot be combined with an explicit composition");
        if (!opt.world || !opt.vocab) throw DataError("missing-oracle: prompt expansion needs the world priors");
    }

    const int n = opt.n;
    const int T = sched.T;
    const bool is_cads = std::holds_alternative<CadsGuidance>(opt.guidance);
    const bool is_cfg = std::holds_alternative<CfgGuidance>(opt.guidance);
    const double omega = guidance_omega(opt.guidance);

    // Per-trajectory condition labels (empty string = unconditional).
    std::vector<std::string> traj_label(static_cast<std::size_t>(n));
    bool conditioned = false;
    if (opt.expand_oracle) {
        conditioned = true;
        for (int i = 0; i < n; ++i) {
            RngStream expand(substream_seed(opt.seed, "sample-expand", static_cast<std::uint64_t>(i)));
            traj_label[static_cast<std::size_t>(i)] = oracle_prompt_expand(*opt.condition, *opt.vocab, *opt.world, expand);
        }
    } else if (!opt.compose && opt.condition) {
        conditioned = true;
        std::fill(traj_label.begin(), traj_label.end(), *opt.condition);
    }

    // Labels whose scores must be evaluated each step.
    std::vector<std::string> eval_labels;
    if (opt.compose) {
        eval_labels = opt.compose->labels;
    } else if (conditioned) {
        eval_labels = traj_label;
        std::sort(eval_labels.begin(), eval_labels.end());
        eval_labels.erase(std::unique(eval_labels.begin(), eval_labels.end()), eval_labels.end());
    }
    const bool pure_unconditional = eval_labels.empty();
    const bool and_mode = opt.compose && opt.compose->op == ComposeOp::And;
    const bool or_exact = opt.compose && opt.compose->op == ComposeOp::Or &&
                          opt.compose->weighting == OrWeighting::ExactLikelihood;
    if (or_exact && !opt.oracle)
        throw DataError("missing-oracle: exact-likelihood OR weights need a mixture likelihood oracle");
    // The unconditional score enters the CFG combination with weight
    // (omega - 1), so it can be skipped only for plain CFG at omega = 1.
    const bool need_uncond = pure_unconditional || and_mode || !is_cfg || omega != 1.0;

    std::vector<RngStream> noise;
    noise.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) noise.emplace_back(substream_seed(opt.seed, "sample-noise", static_cast<std::uint64_t>(i)));
    std::vector<RngStream> cads;
    if (is_cads) {
        cads.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            cads.emplace_back(substream_seed(opt.seed, "sample-cads", static_cast<std::uint64_t>(i)));
    }

    std::vector<Vec2> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = noise[static_cast<std::size_t>(i)].gauss2();

    std::vector<ApgState> apg(static_cast<std::size_t>(n));
    std::vector<Vec2> s_u(static_cast<std::size_t>(n), Vec2{0.0, 0.0});
    std::map<std::string, std::vector<Vec2>> bufs;
    for (const auto& l : eval_labels) bufs[l].assign(static_cast<std::size_t>(n), Vec2{0.0, 0.0});

    // Gather/scatter index lists per label when trajectories carry different
    // conditions (prompt expansion).
    std::map<std::string, std::vector<int>> label_groups;
    const bool grouped = !opt.compose && conditioned && eval_labels.size() > 1;
    if (grouped) {
        for (int i = 0; i < n; ++i) label_groups[traj_label[static_cast<std::size_t>(i)]].push_back(i);
    }

    std::vector<Vec2> gather_x, gather_out;
    const std::size_t n_labels = opt.compose ? opt.compose->labels.size() : 0;

    // Surface unknown-label errors here rather than inside the parallel loop.
    for (const auto& l : eval_labels) {
        (void)field.score(x.front(), T - 1, l);
        if (or_exact) (void)opt.oracle->cond_log_density(x.front(), T - 1, l);
    }

    for (int t = T - 1; t >= 0; --t) {
        if (need_uncond) field.score_batch(x, t, std::nullopt, s_u);
        if (grouped) {
            for (const auto& [label, ids] : label_groups) {
                gather_x.resize(ids.size());
                gather_out.resize(ids.size());
                for (std::size_t j = 0; j < ids.size(); ++j) gather_x[j] = x[static_cast<std::size_t>(ids[j])];
                field.score_batch(gather_x, t, label, gather_out);
                auto& buf = bufs[label];
                for (std::size_t j = 0; j < ids.size(); ++j) buf[static_cast<std::size_t>(ids[j])] = gather_out[j];
            }
        } else {
            for (const auto& l : eval_labels) field.score_batch(x, t, l, bufs[l]);
        }

        const double beta = sched.beta(t);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
        double noise_std = 0.0;
        if (t > 0) {
            double var = beta;
            if (opt.tilde_variance) var = beta * (1.0 - sched.alpha_bar_before(t)) / (1.0 - sched.alpha_bar(t));
            noise_std = std::sqrt(var);
        }
        const double t_norm = sched.t_norm(t);

#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            const std::size_t ui = static_cast<std::size_t>(i);
            Vec2 sc;
            if (opt.compose) {
                if (and_mode) {
                    Vec2 acc = s_u[ui];
                    for (std::size_t l = 0; l < n_labels; ++l) acc += bufs[opt.compose->labels[l]][ui] - s_u[ui];
                    sc = acc;
                } else if (or_exact) {
                    const auto w = or_weights(*opt.oracle, opt.compose->labels, x[ui], t);
                    Vec2 acc{0.0, 0.0};
                    for (std::size_t l = 0; l < n_labels; ++l) acc += w[l] * bufs[opt.compose->labels[l]][ui];
                    sc = acc;
                } else {
                    const double w = 1.0 / static_cast<double>(n_labels);
                    Vec2 acc{0.0, 0.0};
                    for (std::size_t l = 0; l < n_labels; ++l) acc += w * bufs[opt.compose->labels[l]][ui];
                    sc = acc;
                }
            } else if (conditioned) {
                sc = bufs[traj_label[ui]][ui];
            } else {
                sc = s_u[ui];
            }

            Vec2 g;
            if (pure_unconditional)
                g = s_u[ui];
            else
                g = guided_point_score(opt.guidance, s_u[ui], sc, t_norm, apg[ui], is_cads ? &cads[ui] : nullptr);

            Vec2 next{(x[ui].x + beta * g.x) * inv_sqrt_alpha, (x[ui].y + beta * g.y) * inv_sqrt_alpha};
            if (t > 0) {
                const Vec2 z = noise[ui].gauss2();
                next.x += noise_std * z.x;
                next.y += noise_std * z.y;
            }
            x[ui] = next;
        }
    }

    SampleSet out;
    out.points = std::move(x);
    out.meta.seed = opt.seed;
    out.meta.condition = opt.condition.value_or("");
    std::string desc = describe_guidance(opt.guidance);
    if (opt.compose) desc += " " + opt.compose->describe();
    if (opt.expand_oracle) desc += " expand-oracle";
    out.meta.guidance = desc;
    out.meta.sampler = std::string("ddpm-ancestral-T") + std::to_string(T) + (opt.tilde_variance ? "-tildevar" : "");
    return out;
}

} // namespace mixlab
