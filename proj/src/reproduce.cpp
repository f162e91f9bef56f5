#include "mixlab/reproduce.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "mixlab/metrics.hpp"

namespace mixlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct PublishedValues {
    double d_kl, fd, vs_gen, vs_ref;
};

// Published reference numbers for the two quadrant-world scenarios.
PublishedValues published_values(const std::string& scenario, double omega) {
    if (scenario == "or-general-cat") return omega > 1.0 ? PublishedValues{23.78, 14.41, 1.03, 1.82}
                                                         : PublishedValues{1.20, 2.48, 1.43, 1.82};
    if (scenario == "and-black-dog") return omega > 1.0 ? PublishedValues{0.93, 1.32, 1.33, 1.10}
                                                        : PublishedValues{1.51, 6.64, 2.04, 1.10};
    return {0.0, 0.0, 0.0, 0.0};
}

std::string omega_tag(double omega) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", omega);
    std::string s(buf);
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

} // namespace

void ReproductionSpec::validate() const {
    if (n_per_scenario < 100) throw UsageError("reproduce: n per scenario must be >= 100");
    if (omegas.empty()) throw UsageError("reproduce: at least one omega required");
    if (out_dir.empty()) throw UsageError("reproduce: output directory required");
}

json ReproductionTable::to_json() const {
    json rows_j = json::array();
    for (const auto& r : rows) {
        rows_j.push_back({{"scenario", r.scenario},
                          {"omega", r.omega},
                          {"d_kl", r.d_kl},
                          {"fd", r.fd},
                          {"vs_gen", r.vs_gen},
                          {"vs_ref", r.vs_ref},
                          {"published_d_kl", r.published_d_kl},
                          {"published_fd", r.published_fd},
                          {"published_vs_gen", r.published_vs_gen},
                          {"published_vs_ref", r.published_vs_ref}});
    }
    return json{{"rows", rows_j}, {"footer", footer}};
}

std::string ReproductionTable::to_csv() const {
    std::ostringstream os;
    os << "scenario,omega,d_kl,fd,vs_gen,vs_ref,published_d_kl,published_fd,published_vs_gen,published_vs_ref\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%g,%.6g,%.6g,%.6g,%.6g,%g,%g,%g,%g\n", r.scenario.c_str(), r.omega,
                      r.d_kl, r.fd, r.vs_gen, r.vs_ref, r.published_d_kl, r.published_fd, r.published_vs_gen, r.published_vs_ref);
        os << buf;
    }
    if (!footer.empty()) os << "# " << footer << "\n";
    return os.str();
}

ReproductionTable reproduce_section2(const ReproductionSpec& spec) {
    spec.validate();
    const auto [world, vocab] = build_quadrant_world();
    const NoiseSchedule schedule = default_schedule();
    fs::create_directories(spec.out_dir);

    AnalyticScoreField analytic(world, vocab, schedule);

    std::unique_ptr<NetScoreField> fine_field, general_field;
    if (!spec.analytic_field) {
        auto ensure_model = [&](const std::string& path, TrainMode mode, const char* stream) {
            if (!path.empty() && fs::exists(path)) return std::make_unique<NetScoreField>(load_checkpoint(path), schedule);
            if (!spec.train_if_missing)
                throw DataError("missing-checkpoint: \"" + path + "\" not found and training not requested");
            TrainConfig cfg = spec.train_cfg;
            cfg.seed = substream_seed(spec.seed, stream);
            auto [params, report] = train(world, vocab, mode, cfg, schedule);
            if (!path.empty()) {
                save_checkpoint(params, mode, cfg, path);
                std::ofstream rep(path + ".train_report.json");
                rep << json{{"epoch_loss", report.epoch_loss},
                            {"final_loss", report.final_loss},
                            {"wall_time_sec", report.wall_time_sec}}
                           .dump(2)
                    << "\n";
            }
            return std::make_unique<NetScoreField>(std::move(params), schedule);
        };
        fine_field = ensure_model(spec.fine_checkpoint, TrainMode::FineGrained, "train-fine");
        general_field = ensure_model(spec.general_checkpoint, TrainMode::General, "train-general");
    }

    const OrWeighting or_mode = spec.or_weighting.value_or(spec.analytic_field ? OrWeighting::ExactLikelihood
                                                                               : OrWeighting::Uniform);
    const AndMechanism and_mode =
        spec.and_mechanism.value_or(spec.analytic_field ? AndMechanism::Sum : AndMechanism::Pooled);

    struct Scenario {
        std::string id;
        std::string target; // the prompt whose true conditional is the reference
        CompositionSpec compose;
        const ScoreField* field;
    };
    // OR: the general prompt decomposed into the fine labels of its components.
    CompositionSpec or_spec;
    or_spec.op = ComposeOp::Or;
    or_spec.weighting = or_mode;
    for (int c : vocab.components_of("cat")) or_spec.labels.push_back(vocab.fine_label_of(c));
    std::sort(or_spec.labels.begin(), or_spec.labels.end());
    // AND: the fine prompt assembled from the general labels covering it.
    // Pooled mode averages the constituent conditional scores before CFG (the
    // mean is what uniform OR composition computes), so the exact composition
    // sits at omega = M and omega = 1 purposely under-conditions.
    CompositionSpec and_spec;
    if (and_mode == AndMechanism::Pooled) {
        and_spec.op = ComposeOp::Or;
        and_spec.weighting = OrWeighting::Uniform;
    } else {
        and_spec.op = ComposeOp::And;
    }
    and_spec.labels = vocab.general_labels_of(vocab.components_of("black dog").front());

    const std::vector<Scenario> scenarios = {
        {"or-general-cat", "cat", or_spec, spec.analytic_field ? static_cast<const ScoreField*>(&analytic) : fine_field.get()},
        {"and-black-dog", "black dog", and_spec,
         spec.analytic_field ? static_cast<const ScoreField*>(&analytic) : general_field.get()},
    };

    ReproductionTable table;
    const KernelConfig kernel{spec.vendi_bandwidth};
    for (const auto& sc : scenarios) {
        const Mixture ref_mixture = conditional_mixture(world, vocab, sc.target);
        RngStream ref_rng(substream_seed(spec.seed, "ref-" + sc.id));
        SampleSet ref = sample_mixture(ref_mixture, spec.n_per_scenario, ref_rng);
        ref.meta.condition = sc.target;
        ref.meta.seed = spec.seed;
        save_samples_csv(ref, (fs::path(spec.out_dir) / ("reference_" + sc.id + ".csv")).string());
        const FeatureSet ref_features = FeatureSet::from_points(ref.points);
        const double vs_ref =
            vendi_score(subsample_features(ref_features, spec.vendi_cap, substream_seed(spec.seed, "vendi")), kernel);

        for (double omega : spec.omegas) {
            SamplerOptions opt;
            opt.guidance = CfgGuidance{omega};
            opt.compose = sc.compose;
            opt.condition = sc.target;
            opt.n = spec.n_per_scenario;
            opt.seed = substream_seed(spec.seed, "sample-" + sc.id + "-w" + omega_tag(omega));
            opt.oracle = &analytic;
            opt.world = &world;
            opt.vocab = &vocab;
            SampleSet gen = ancestral_sample(*sc.field, schedule, opt);
            gen.meta.condition = sc.target;
            save_samples_csv(gen, (fs::path(spec.out_dir) / ("samples_" + sc.id + "_w" + omega_tag(omega) + ".csv")).string());

            const FeatureSet gen_features = FeatureSet::from_points(gen.points);
            ScenarioRow row;
            row.scenario = sc.id;
            row.omega = omega;
            row.d_kl = forward_kl(ref_mixture, gen_features,
                                  KlConfig{spec.kl_ref_samples, substream_seed(spec.seed, "kl-" + sc.id)});
            row.fd = frechet_distance(gen_features, ref_features);
            row.vs_gen = vendi_score(
                subsample_features(gen_features, spec.vendi_cap, substream_seed(spec.seed, "vendi")), kernel);
            row.vs_ref = vs_ref;
            const PublishedValues pv = published_values(sc.id, omega);
            row.published_d_kl = pv.d_kl;
            row.published_fd = pv.fd;
            row.published_vs_gen = pv.vs_gen;
            row.published_vs_ref = pv.vs_ref;
            table.rows.push_back(row);
        }
    }
    table.footer =
        "Vendi uses an RBF kernel (bandwidth " + std::to_string(spec.vendi_bandwidth) +
        ") on raw 2D points; the reference rows report their published values under an unstated feature "
        "kernel, so VS columns are comparable as orderings only.";

    {
        std::ofstream out(fs::path(spec.out_dir) / "reproduction.json");
        if (!out) throw DataError("io-error: cannot write reproduction.json");
        json j = table.to_json();
        j["config"] = {{"analytic_field", spec.analytic_field},
                       {"omegas", spec.omegas},
                       {"n_per_scenario", spec.n_per_scenario},
                       {"seed", spec.seed},
                       {"or_weighting", or_mode == OrWeighting::ExactLikelihood ? "exact" : "uniform"},
                       {"and_mechanism", and_mode == AndMechanism::Pooled ? "pooled" : "sum"},
                       {"vendi_cap", spec.vendi_cap},
                       {"vendi_bandwidth", spec.vendi_bandwidth},
                       {"kl_ref_samples", spec.kl_ref_samples}};
        out << j.dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(spec.out_dir) / "reproduction.csv");
        if (!out) throw DataError("io-error: cannot write reproduction.csv");
        out << table.to_csv();
    }
    return table;
}

void emit_plot_data(const std::string& results_dir, const std::string& out_dir) {
    const fs::path table_path = fs::path(results_dir) / "reproduction.json";
    if (!fs::exists(table_path))
        throw DataError("missing-results: \"" + table_path.string() + "\" not found; run reproduce first");
    json j;
    {
        std::ifstream in(table_path);
        in >> j;
    }
    if (!j.contains("rows") || j.at("rows").empty()) throw DataError("missing-results: reproduction table has no rows");

    // Validate every input before writing any output.
    struct RowFiles {
        std::string scenario;
        double omega;
        fs::path samples;
    };
    std::vector<RowFiles> inputs;
    for (const auto& row : j.at("rows")) {
        RowFiles rf;
        rf.scenario = row.at("scenario").get<std::string>();
        rf.omega = row.at("omega").get<double>();
        rf.samples = fs::path(results_dir) / ("samples_" + rf.scenario + "_w" + omega_tag(rf.omega) + ".csv");
        if (!fs::exists(rf.samples)) throw DataError("missing-results: \"" + rf.samples.string() + "\" not found");
        inputs.push_back(std::move(rf));
    }

    fs::create_directories(out_dir);
    for (const auto& rf : inputs) {
        const SampleSet s = load_samples_csv(rf.samples.string());
        SampleSet copy = s;
        save_samples_csv(copy,
                         (fs::path(out_dir) / ("scatter_" + rf.scenario + "_w" + omega_tag(rf.omega) + ".csv")).string());
    }
    std::ofstream metrics(fs::path(out_dir) / "metrics_vs_omega.csv");
    if (!metrics) throw DataError("io-error: cannot write metrics_vs_omega.csv");
    metrics << "scenario,omega,d_kl,fd,vs_gen,vs_ref\n";
    char buf[192];
    for (const auto& row : j.at("rows")) {
        std::snprintf(buf, sizeof(buf), "%s,%g,%.6g,%.6g,%.6g,%.6g\n", row.at("scenario").get<std::string>().c_str(),
                      row.at("omega").get<double>(), row.at("d_kl").get<double>(), row.at("fd").get<double>(),
                      row.at("vs_gen").get<double>(), row.at("vs_ref").get<double>());
        metrics << buf;
    }
}

} // namespace mixlab
