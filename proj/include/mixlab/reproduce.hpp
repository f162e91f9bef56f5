#ifndef MIXLAB_REPRODUCE_HPP
#define MIXLAB_REPRODUCE_HPP

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixlab/guidance.hpp"
#include "mixlab/score_net.hpp"

namespace mixlab {

// How the AND-side scenario applies its guidance scale.
//
// Pooled: CFG(omega) over the MEAN of the general-constituent conditional
// scores — the score-space analog of conditioning on pooled token
// embeddings, which is how a trained model actually consumes a compound
// prompt. The exact AND composition corresponds to omega = M on this dial,
// so omega = 1 under-conditions (broad, diverse) and omega = 3 slightly
// over-conditions (sharp).
//
// Sum: CFG(omega) over s_u + sum_i (s_i - s_u), the literal AND operator;
// already exact at omega = 1 with oracle scores.
enum class AndMechanism { Pooled, Sum };

// The two generalization scenarios: inference with the general prompt "cat"
// against the fine-grained-trained model (OR side), and inference with the
// fine-grained prompt "black dog" against the general-trained model (AND
// side), each run at every omega in `omegas`.
struct ReproductionSpec {
    bool analytic_field = false; // oracle scores instead of trained networks
    std::string fine_checkpoint;
    std::string general_checkpoint;
    bool train_if_missing = false;
    TrainConfig train_cfg;

    std::vector<double> omegas = {1.0, 3.0};
    int n_per_scenario = 10000;
    std::uint64_t seed = 0;
    std::string out_dir;

    // Default weighting: exact likelihoods with the analytic field (they are
    // available there), uniform with trained networks (they are not).
    std::optional<OrWeighting> or_weighting;
    // Default mechanism: Sum (exact) with the analytic field, Pooled with
    // trained networks (the dial a score-only model actually exposes).
    std::optional<AndMechanism> and_mechanism;

    int vendi_cap = 512; // Jacobi eigensolver cost grows as n^3
    double vendi_bandwidth = 1.0;
    int kl_ref_samples = 10000;

    void validate() const;
};

struct ScenarioRow {
    std::string scenario;
    double omega = 0.0;
    double d_kl = 0.0;
    double fd = 0.0;
    double vs_gen = 0.0;
    double vs_ref = 0.0;
    // Reported values from the study being reproduced, for side-by-side
    // inspection (matched as orderings/ratios only).
    double published_d_kl = 0.0;
    double published_fd = 0.0;
    double published_vs_gen = 0.0;
    double published_vs_ref = 0.0;
};

struct ReproductionTable {
    std::vector<ScenarioRow> rows;
    std::string footer;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

ReproductionTable reproduce_section2(const ReproductionSpec& spec);

// Re-emits a finished run as plotting-friendly CSV series: one scatter CSV
// per (scenario, omega) plus a metrics-vs-omega table. Validates all inputs
// before writing anything.
void emit_plot_data(const std::string& results_dir, const std::string& out_dir);

} // namespace mixlab

#endif
