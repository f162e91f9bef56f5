// mixlab command-line interface.
//
// Subcommands: world init, train, sample, eval, pipeline run,
// reproduce section2, emit-plots. Every command is deterministic given
// --seed and echoes its configuration next to its outputs.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "mixlab/guidance.hpp"
#include "mixlab/metrics.hpp"
#include "mixlab/pipeline.hpp"
#include "mixlab/reproduce.hpp"
#include "mixlab/score_net.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mixlab;

namespace {

// JSON config files for CLI11: top-level keys are global options, nested
// objects scope options to subcommands, e.g. {"sample": {"n": 500}}.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            input >> j;
        } catch (const json::exception& e) {
            throw CLI::FileError(std::string("config is not valid JSON: ") + e.what());
        }
        std::vector<CLI::ConfigItem> items;
        walk(j, {}, items);
        return items;
    }

private:
    static void walk(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                auto deeper = parents;
                deeper.push_back(key);
                walk(value, deeper, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& e : value) item.inputs.push_back(e.is_string() ? e.get<std::string>() : e.dump());
            } else {
                item.inputs.push_back(value.is_string() ? value.get<std::string>() : value.dump());
            }
            out.push_back(std::move(item));
        }
    }
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
}

double parse_real(const std::string& s, const char* what) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError(std::string("invalid-guidance: cannot parse ") + what + " from \"" + s + "\"");
    }
}

// cfg:W | apg:eta,r,beta,W | cads:tau1,tau2,s,phi,W | interval:lo,hi,W
GuidanceConfig parse_guidance(const std::string& text) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::vector<std::string> args =
        colon == std::string::npos ? std::vector<std::string>{} : split(text.substr(colon + 1), ',');
    auto want = [&](std::size_t n) {
        if (args.size() != n)
            throw UsageError("invalid-guidance: " + kind + " expects " + std::to_string(n) + " parameters");
    };
    GuidanceConfig out;
    if (kind == "cfg") {
        want(1);
        out = CfgGuidance{parse_real(args[0], "omega")};
    } else if (kind == "apg") {
        want(4);
        out = ApgGuidance{parse_real(args[0], "eta"), parse_real(args[1], "r"), parse_real(args[2], "beta"),
                          parse_real(args[3], "omega")};
    } else if (kind == "cads") {
        want(5);
        out = CadsGuidance{parse_real(args[0], "tau1"), parse_real(args[1], "tau2"), parse_real(args[2], "s"),
                           parse_real(args[3], "phi"), parse_real(args[4], "omega")};
    } else if (kind == "interval") {
        want(3);
        out = IntervalGuidance{parse_real(args[0], "tau_lo"), parse_real(args[1], "tau_hi"),
                               parse_real(args[2], "omega")};
    } else {
        throw UsageError("invalid-guidance: unknown variant \"" + kind + "\" (cfg|apg|cads|interval)");
    }
    validate_guidance(out);
    return out;
}

// {or-exact|or-uniform|and}:L1,L2,...
CompositionSpec parse_compose(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw UsageError("invalid-composition: expected OP:label1,label2,...");
    const std::string op = text.substr(0, colon);
    CompositionSpec spec;
    if (op == "or-exact") {
        spec.op = ComposeOp::Or;
        spec.weighting = OrWeighting::ExactLikelihood;
    } else if (op == "or-uniform") {
        spec.op = ComposeOp::Or;
        spec.weighting = OrWeighting::Uniform;
    } else if (op == "and") {
        spec.op = ComposeOp::And;
    } else {
        throw UsageError("invalid-composition: unknown operator \"" + op + "\" (or-exact|or-uniform|and)");
    }
    spec.labels = split(text.substr(colon + 1), ',');
    spec.validate();
    return spec;
}

void write_manifest(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("io-error: cannot open \"" + path + "\" for writing");
    out << j.dump(2) << "\n";
}

struct ScheduleArgs {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;

    void attach(CLI::App* cmd) {
        cmd->add_option("--T", T, "diffusion steps");
        cmd->add_option("--beta-start", beta_start, "first beta");
        cmd->add_option("--beta-end", beta_end, "last beta");
    }
    NoiseSchedule build() const { return make_schedule(T, beta_start, beta_end); }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale diffusion laboratory: Gaussian-mixture worlds, guided sampling, "
                 "benchmark pipeline, and evaluation metrics"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "JSON config file (nested keys scope to subcommands)");
    app.config_formatter(std::make_shared<JsonConfig>());

    // ---- world init ----------------------------------------------------
    auto* world_cmd = app.add_subcommand("world", "world utilities");
    world_cmd->require_subcommand(1);
    auto* world_init = world_cmd->add_subcommand("init", "write the quadrant world JSON");
    std::string world_out = "world.json";
    world_init->add_option("--out", world_out, "output path");
    world_init->callback([&] {
        const auto [world, vocab] = build_quadrant_world();
        save_world_json(world, vocab, world_out);
        write_manifest(world_out + ".manifest.json", json{{"command", "world init"}, {"out", world_out}});
        std::cout << "wrote " << world_out << "\n";
    });

    // ---- train ----------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train a noise-prediction network");
    std::string train_mode = "fine_grained";
    std::string train_out = "checkpoint.json";
    std::string train_world;
    TrainConfig tcfg;
    ScheduleArgs train_sched;
    std::vector<int> hidden = {128, 128};
    train_cmd->add_option("--mode", train_mode, "fine_grained|general")
        ->check(CLI::IsMember({"fine_grained", "general"}));
    train_cmd->add_option("--out", train_out, "checkpoint path");
    train_cmd->add_option("--world", train_world, "world JSON (default: quadrant world)");
    train_cmd->add_option("--seed", tcfg.seed, "rng seed");
    train_cmd->add_option("--epochs", tcfg.epochs, "training epochs");
    train_cmd->add_option("--batch-size", tcfg.batch_size, "batch size");
    train_cmd->add_option("--lr", tcfg.learning_rate, "learning rate");
    train_cmd->add_option("--warmup-steps", tcfg.warmup_steps, "linear warmup steps");
    train_cmd->add_option("--decay-gamma", tcfg.decay_gamma, "per-epoch lr decay");
    train_cmd->add_option("--cond-drop-prob", tcfg.cond_drop_prob, "condition dropout probability");
    train_cmd->add_option("--dataset-size", tcfg.dataset_size, "training draws from the world");
    train_cmd->add_option("--emb-dim", tcfg.shape.emb_dim, "embedding width");
    train_cmd->add_option("--time-features", tcfg.shape.time_features, "sinusoidal feature count");
    train_cmd->add_option("--hidden", hidden, "hidden layer widths");
    train_sched.attach(train_cmd);
    train_cmd->callback([&] {
        tcfg.shape.hidden = hidden;
        const NoiseSchedule s = train_sched.build();
        const auto [world, vocab] = train_world.empty() ? build_quadrant_world() : load_world_json(train_world);
        const TrainMode mode = train_mode == "general" ? TrainMode::General : TrainMode::FineGrained;
        auto [params, report] = train(world, vocab, mode, tcfg, s);
        save_checkpoint(params, mode, tcfg, train_out);
        write_manifest(train_out + ".train_report.json",
                       json{{"command", "train"},
                            {"mode", train_mode},
                            {"seed", tcfg.seed},
                            {"schedule",
                             {{"T", train_sched.T},
                              {"beta_start", train_sched.beta_start},
                              {"beta_end", train_sched.beta_end}}},
                            {"epoch_loss", report.epoch_loss},
                            {"final_loss", report.final_loss},
                            {"wall_time_sec", report.wall_time_sec}});
        std::cout << "final epoch loss " << report.final_loss << ", wrote " << train_out << "\n";
    });

    // ---- sample ----------------------------------------------------------
    auto* sample_cmd = app.add_subcommand("sample", "run the guided ancestral sampler");
    std::string field_spec = "analytic";
    std::string sample_world;
    std::string condition;
    std::string guidance_text = "cfg:1";
    std::string compose_text;
    std::string sample_out = "samples.csv";
    bool expand = false;
    bool tilde_variance = false;
    int sample_n = 1000;
    std::uint64_t sample_seed = 0;
    ScheduleArgs sample_sched;
    sample_cmd->add_option("--field", field_spec, "analytic | checkpoint:PATH");
    sample_cmd->add_option("--world", sample_world, "world JSON (default: quadrant world)");
    sample_cmd->add_option("--condition", condition, "prompt label");
    sample_cmd->add_option("--guidance", guidance_text,
                           "cfg:W | apg:eta,r,beta,W | cads:t1,t2,s,phi,W | interval:lo,hi,W");
    sample_cmd->add_option("--compose", compose_text, "{or-exact|or-uniform|and}:L1,L2,...");
    sample_cmd->add_flag("--expand-oracle", expand, "expand a general prompt per trajectory");
    sample_cmd->add_flag("--tilde-variance", tilde_variance, "use the beta-tilde posterior variance");
    sample_cmd->add_option("--n", sample_n, "trajectories");
    sample_cmd->add_option("--seed", sample_seed, "rng seed");
    sample_cmd->add_option("--out", sample_out, "output CSV");
    sample_sched.attach(sample_cmd);
    sample_cmd->callback([&] {
        const NoiseSchedule s = sample_sched.build();
        const auto [world, vocab] = sample_world.empty() ? build_quadrant_world() : load_world_json(sample_world);
        const AnalyticScoreField analytic(world, vocab, s);
        std::unique_ptr<NetScoreField> net;
        const ScoreField* field = &analytic;
        if (field_spec.rfind("checkpoint:", 0) == 0) {
            net = std::make_unique<NetScoreField>(load_checkpoint(field_spec.substr(11)), s);
            field = net.get();
        } else if (field_spec != "analytic") {
            throw UsageError("invalid-field: expected analytic or checkpoint:PATH");
        }
        SamplerOptions opt;
        opt.guidance = parse_guidance(guidance_text);
        if (!compose_text.empty()) opt.compose = parse_compose(compose_text);
        if (!condition.empty()) opt.condition = condition;
        opt.expand_oracle = expand;
        opt.tilde_variance = tilde_variance;
        opt.n = sample_n;
        opt.seed = sample_seed;
        opt.oracle = &analytic;
        opt.world = &world;
        opt.vocab = &vocab;
        SampleSet out = ancestral_sample(*field, s, opt);
        save_samples_csv(out, sample_out);
        std::cout << "wrote " << out.points.size() << " samples to " << sample_out << "\n";
    });

    // ---- eval -------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "compute the metric report for a generated set");
    std::string eval_gen, eval_real, eval_world, eval_condition;
    std::string eval_out = "report.json";
    int eval_k = 5;
    double vendi_bandwidth = 1.0;
    int vendi_cap = 0; // 0 = no cap
    int kl_ref_samples = 10000;
    std::uint64_t eval_seed = 0;
    eval_cmd->add_option("--gen", eval_gen, "generated features (CSV or JSONL)")->required();
    eval_cmd->add_option("--real", eval_real, "reference features (CSV or JSONL)")->required();
    eval_cmd->add_option("--world", eval_world, "world JSON enabling forward KL");
    eval_cmd->add_option("--condition", eval_condition, "conditional restriction for the KL reference");
    eval_cmd->add_option("--k", eval_k, "neighbor count for precision/density/coverage");
    eval_cmd->add_option("--vendi-bandwidth", vendi_bandwidth, "RBF bandwidth");
    eval_cmd->add_option("--vendi-cap", vendi_cap, "subsample cap for the Vendi eigenproblem (0 = none)");
    eval_cmd->add_option("--kl-ref-samples", kl_ref_samples, "reference draws for the KL estimate");
    eval_cmd->add_option("--seed", eval_seed, "rng seed");
    eval_cmd->add_option("--out", eval_out, "report path");
    eval_cmd->callback([&] {
        const FeatureSet gen = load_features(eval_gen);
        const FeatureSet real = load_features(eval_real);
        MetricReport report;
        report.fd = frechet_distance(gen, real);
        const FeatureSet vendi_in = vendi_cap > 0 ? subsample_features(gen, vendi_cap, eval_seed) : gen;
        report.vendi = vendi_score(vendi_in, KernelConfig{vendi_bandwidth});
        const PrdcResult prdc = precision_density_coverage(real, gen, eval_k);
        report.precision = prdc.precision;
        report.density = prdc.density;
        report.coverage = prdc.coverage;
        if (!eval_world.empty()) {
            const auto [world, vocab] = load_world_json(eval_world);
            const Mixture ref = eval_condition.empty() ? world : conditional_mixture(world, vocab, eval_condition);
            report.kl = forward_kl(ref, gen, KlConfig{kl_ref_samples, eval_seed});
        }
        report.config = {{"gen", eval_gen},
                         {"real", eval_real},
                         {"world", eval_world},
                         {"condition", eval_condition},
                         {"k", eval_k},
                         {"vendi_bandwidth", vendi_bandwidth},
                         {"vendi_cap", vendi_cap},
                         {"kl_ref_samples", kl_ref_samples},
                         {"seed", eval_seed}};
        write_manifest(eval_out, report.to_json());
        std::cout << report.to_json().dump(2) << "\n";
    });

    // ---- pipeline run ------------------------------------------------------
    auto* pipeline_cmd = app.add_subcommand("pipeline", "benchmark dataset pipeline");
    pipeline_cmd->require_subcommand(1);
    auto* pipeline_run = pipeline_cmd->add_subcommand("run", "pair, align, subsample, and compute N_gen");
    std::string pipe_data;
    std::string pipe_out = "pipeline_out";
    PipelineConfig pcfg;
    int sample_m = -1;
    pipeline_run->add_option("--data", pipe_data, "JSONL dataset of embedding records")->required();
    pipeline_run->add_option("--levels", pcfg.levels, "complexity levels (1..K)");
    pipeline_run->add_option("--tau", pcfg.tau, "cosine similarity threshold");
    pipeline_run->add_option("--min-pair", pcfg.min_pair_size, "pairing cardinality floor");
    pipeline_run->add_option("--floor", pcfg.ngen_floor, "alignment floor (N_gen floor)");
    pipeline_run->add_option("--sample-m", sample_m, "captions kept per level (-1 = min retained)");
    pipeline_run->add_option("--seed", pcfg.seed, "rng seed");
    pipeline_run->add_option("--out", pipe_out, "output directory");
    pipeline_run->callback([&] {
        if (sample_m >= 0) pcfg.sample_m = sample_m;
        const PipelineManifest manifest = run_pipeline(pipe_data, pcfg, pipe_out);
        std::cout << manifest.to_json().dump(2) << "\n";
    });

    // ---- reproduce section2 -------------------------------------------------
    auto* repro_cmd = app.add_subcommand("reproduce", "reproduce the synthetic-study results");
    repro_cmd->require_subcommand(1);
    auto* repro_s2 = repro_cmd->add_subcommand("section2", "generalization scenarios on the quadrant world");
    ReproductionSpec rspec;
    rspec.out_dir = "reproduction_out";
    std::string or_weighting;
    bool do_train = false;
    repro_s2->add_flag("--analytic-field", rspec.analytic_field, "use oracle scores instead of trained networks");
    repro_s2->add_flag("--train", do_train, "train missing checkpoints");
    repro_s2->add_option("--fine-ckpt", rspec.fine_checkpoint, "fine-grained checkpoint path");
    repro_s2->add_option("--general-ckpt", rspec.general_checkpoint, "general checkpoint path");
    repro_s2->add_option("--omegas", rspec.omegas, "guidance scales");
    repro_s2->add_option("--n", rspec.n_per_scenario, "samples per scenario");
    repro_s2->add_option("--seed", rspec.seed, "rng seed");
    repro_s2->add_option("--out", rspec.out_dir, "output directory");
    repro_s2->add_option("--or-weights", or_weighting, "exact|uniform (default: exact for analytic, uniform for nets)")
        ->check(CLI::IsMember({"exact", "uniform"}));
    std::string and_mechanism;
    repro_s2->add_option("--and-compose", and_mechanism,
                         "pooled|sum (default: sum for analytic, pooled for nets)")
        ->check(CLI::IsMember({"pooled", "sum"}));
    repro_s2->add_option("--vendi-cap", rspec.vendi_cap, "subsample cap for the Vendi eigenproblem");
    repro_s2->add_option("--vendi-bandwidth", rspec.vendi_bandwidth, "RBF bandwidth");
    repro_s2->add_option("--kl-ref-samples", rspec.kl_ref_samples, "reference draws for the KL estimate");
    repro_s2->add_option("--epochs", rspec.train_cfg.epochs, "training epochs when --train");
    repro_s2->add_option("--dataset-size", rspec.train_cfg.dataset_size, "training draws when --train");
    repro_s2->callback([&] {
        rspec.train_if_missing = do_train;
        if (or_weighting == "exact") rspec.or_weighting = OrWeighting::ExactLikelihood;
        if (or_weighting == "uniform") rspec.or_weighting = OrWeighting::Uniform;
        if (and_mechanism == "pooled") rspec.and_mechanism = AndMechanism::Pooled;
        if (and_mechanism == "sum") rspec.and_mechanism = AndMechanism::Sum;
        if (rspec.fine_checkpoint.empty()) rspec.fine_checkpoint = (fs::path(rspec.out_dir) / "fine.ckpt.json").string();
        if (rspec.general_checkpoint.empty())
            rspec.general_checkpoint = (fs::path(rspec.out_dir) / "general.ckpt.json").string();
        const ReproductionTable table = reproduce_section2(rspec);
        std::cout << table.to_csv();
    });

    // ---- emit-plots ----------------------------------------------------------
    auto* plots_cmd = app.add_subcommand("emit-plots", "emit plot-ready CSV series from a reproduction run");
    std::string plots_results = "reproduction_out";
    std::string plots_out;
    plots_cmd->add_option("--results", plots_results, "reproduction output directory");
    plots_cmd->add_option("--out", plots_out, "plot-data directory (default: RESULTS/plots)");
    plots_cmd->callback([&] {
        const std::string out = plots_out.empty() ? (fs::path(plots_results) / "plots").string() : plots_out;
        emit_plot_data(plots_results, out);
        std::cout << "wrote plot data to " << out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
