#include "mixlab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "mixlab/rng.hpp"

namespace mixlab {

using nlohmann::json;

json PairedSets::to_json() const {
    json j = json::object();
    for (const auto& [level, caps] : levels) {
        json jl = json::object();
        for (const auto& [idx, ids] : caps) jl[std::to_string(idx)] = std::vector<std::string>(ids.begin(), ids.end());
        j[std::to_string(level)] = jl;
    }
    return j;
}

PairedSets PairedSets::from_json(const json& j) {
    PairedSets p;
    for (const auto& [level, caps] : j.items()) {
        auto& lvl = p.levels[std::stoi(level)];
        for (const auto& [idx, ids] : caps.items()) {
            auto& s = lvl[std::stoi(idx)];
            for (const auto& id : ids) s.insert(id.get<std::string>());
        }
    }
    return p;
}

json PipelineManifest::to_json() const {
    json cfg_j{{"levels", config.levels},       {"tau", config.tau},
               {"min_pair_size", config.min_pair_size}, {"ngen_floor", config.ngen_floor},
               {"seed", config.seed}};
    if (config.sample_m) cfg_j["sample_m"] = *config.sample_m;
    auto count_map = [](const std::map<int, int>& m) {
        json j = json::object();
        for (const auto& [k, v] : m) j[std::to_string(k)] = v;
        return j;
    };
    return json{{"config", cfg_j},
                {"retained_after_pairing", count_map(retained_after_pairing)},
                {"retained_after_alignment", count_map(retained_after_alignment)},
                {"retained_after_sampling", count_map(retained_after_sampling)},
                {"n_gen", n_gen}};
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DataError("pairing: embedding dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DataError("pairing: zero-norm embedding");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::set<std::string> level_union(const std::map<int, std::set<std::string>>& caps) {
    std::set<std::string> u;
    for (const auto& [idx, ids] : caps) u.insert(ids.begin(), ids.end());
    return u;
}

std::set<std::string> common_pool(const PairedSets& p) {
    std::set<std::string> common;
    bool first = true;
    for (const auto& [level, caps] : p.levels) {
        const std::set<std::string> u = level_union(caps);
        if (first) {
            common = u;
            first = false;
        } else {
            std::set<std::string> inter;
            std::set_intersection(common.begin(), common.end(), u.begin(), u.end(),
                                  std::inserter(inter, inter.begin()));
            common = std::move(inter);
        }
    }
    return common;
}

} // namespace

std::map<int, std::set<std::string>> pair(const std::vector<EmbeddingRecord>& records, int level, double tau,
                                          int min_pair_size) {
    std::map<int, std::set<std::string>> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto it = records[i].caption_embeddings.find(level);
        if (it == records[i].caption_embeddings.end())
            throw DataError("pairing: record \"" + records[i].image_id + "\" has no caption embedding for level " +
                            std::to_string(level));
        std::set<std::string> ids;
        for (const auto& r : records) {
            if (cosine(it->second, r.embedding) >= tau) ids.insert(r.image_id);
        }
        if (static_cast<int>(ids.size()) >= min_pair_size) out[static_cast<int>(i)] = std::move(ids);
    }
    return out;
}

PairedSets align(const PairedSets& paired, int ngen_floor, int* iterations) {
    if (paired.levels.empty()) throw DataError("alignment-collapsed: no levels to align");
    PairedSets p = paired;
    for (const auto& [level, caps] : p.levels)
        if (caps.empty()) throw DataError("alignment-collapsed: level " + std::to_string(level) + " is empty");

    int iters = 0;
    while (true) {
        ++iters;
        const std::set<std::string> before = common_pool(p);
        for (auto& [level, caps] : p.levels) { // levels ascending
            for (auto it = caps.begin(); it != caps.end();) { // captions in index order
                std::set<std::string> inter;
                std::set_intersection(it->second.begin(), it->second.end(), before.begin(), before.end(),
                                      std::inserter(inter, inter.begin()));
                it->second = std::move(inter);
                if (static_cast<int>(it->second.size()) < ngen_floor)
                    it = caps.erase(it);
                else
                    ++it;
            }
            if (caps.empty())
                throw DataError("alignment-collapsed: level " + std::to_string(level) + " lost all captions");
        }
        const std::set<std::string> after = common_pool(p);
        if (after.size() == before.size()) break;
    }
    if (iterations) *iterations = iters;
    return p;
}

PairedSets subsample_captions(const PairedSets& aligned, int m, std::uint64_t seed) {
    if (m < 1) throw UsageError("subsample: m must be >= 1");
    PairedSets out;
    for (const auto& [level, caps] : aligned.levels) {
        if (static_cast<int>(caps.size()) < m)
            throw DataError("subsample: level " + std::to_string(level) + " retains only " +
                            std::to_string(caps.size()) + " captions, need " + std::to_string(m));
        std::vector<int> idx;
        idx.reserve(caps.size());
        for (const auto& [i, ids] : caps) idx.push_back(i);
        RngStream rng(substream_seed(seed, "pipeline-sample", static_cast<std::uint64_t>(level)));
        for (int k = 0; k < m; ++k) {
            const int j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(idx.size() - static_cast<std::size_t>(k))));
            std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(m));
        std::sort(idx.begin(), idx.end()); // deletion/selection preserves caption order
        auto& lvl = out.levels[level];
        for (int i : idx) lvl[i] = caps.at(i);
    }
    return out;
}

int compute_ngen(const PairedSets& selected) {
    bool any = false;
    std::size_t best = 0;
    for (const auto& [level, caps] : selected.levels) {
        for (const auto& [idx, ids] : caps) {
            if (!any || ids.size() < best) best = ids.size();
            any = true;
        }
    }
    if (!any) throw DataError("ngen: empty selection");
    return static_cast<int>(best);
}

std::vector<EmbeddingRecord> load_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("io-error: cannot open \"" + path + "\"");
    std::vector<EmbeddingRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("io-error: bad JSONL at " + path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        EmbeddingRecord r;
        r.image_id = j.at("image_id").get<std::string>();
        r.embedding = j.at("embedding").get<std::vector<double>>();
        if (j.contains("captions"))
            for (const auto& [k, v] : j.at("captions").items()) r.captions[std::stoi(k)] = v.get<std::string>();
        if (j.contains("caption_embeddings"))
            for (const auto& [k, v] : j.at("caption_embeddings").items())
                r.caption_embeddings[std::stoi(k)] = v.get<std::vector<double>>();
        records.push_back(std::move(r));
    }
    return records;
}

PipelineManifest run_pipeline(const std::string& dataset_path, const PipelineConfig& cfg,
                              const std::string& out_dir) {
    if (cfg.levels < 1) throw UsageError("pipeline: levels must be >= 1");
    const std::vector<EmbeddingRecord> records = load_records_jsonl(dataset_path);
    if (records.empty()) throw DataError("pairing: dataset \"" + dataset_path + "\" holds no records");

    PipelineManifest manifest;
    manifest.config = cfg;

    PairedSets paired;
    for (int level = 1; level <= cfg.levels; ++level) {
        auto sets = pair(records, level, cfg.tau, cfg.min_pair_size);
        if (sets.empty()) throw DataError("pairing: level " + std::to_string(level) + " retained no captions");
        manifest.retained_after_pairing[level] = static_cast<int>(sets.size());
        paired.levels[level] = std::move(sets);
    }

    PairedSets aligned = align(paired, cfg.ngen_floor);
    int min_retained = std::numeric_limits<int>::max();
    for (const auto& [level, caps] : aligned.levels) {
        manifest.retained_after_alignment[level] = static_cast<int>(caps.size());
        min_retained = std::min(min_retained, static_cast<int>(caps.size()));
    }

    const int m = cfg.sample_m.value_or(min_retained);
    PairedSets selected = subsample_captions(aligned, m, cfg.seed);
    for (const auto& [level, caps] : selected.levels)
        manifest.retained_after_sampling[level] = static_cast<int>(caps.size());
    manifest.n_gen = compute_ngen(selected);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "paired.json");
        if (!out) throw DataError("io-error: cannot write paired.json under \"" + out_dir + "\"");
        out << selected.to_json().dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "manifest.json");
        if (!out) throw DataError("io-error: cannot write manifest.json under \"" + out_dir + "\"");
        out << manifest.to_json().dump(2) << "\n";
    }
    for (const auto& [level, caps] : selected.levels) {
        std::ofstream out(fs::path(out_dir) / ("prompts_level" + std::to_string(level) + ".txt"));
        for (const auto& [idx, ids] : caps) {
            const auto& rec = records.at(static_cast<std::size_t>(idx));
            const auto it = rec.captions.find(level);
            out << (it != rec.captions.end() ? it->second : rec.image_id) << "\n";
        }
    }
    return manifest;
}

} // namespace mixlab
