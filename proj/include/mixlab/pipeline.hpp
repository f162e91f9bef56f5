#ifndef MIXLAB_PIPELINE_HPP
#define MIXLAB_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixlab/common.hpp"

namespace mixlab {

// One dataset row: an image id, its embedding, and a caption (plus optional
// caption embedding) per complexity level 1..K.
struct EmbeddingRecord {
    std::string image_id;
    std::vector<double> embedding;
    std::map<int, std::string> captions;
    std::map<int, std::vector<double>> caption_embeddings;
};

// Per level: caption index (position in the record list) -> paired image ids.
// The key set of each level is the retained caption index set.
struct PairedSets {
    std::map<int, std::map<int, std::set<std::string>>> levels;

    nlohmann::json to_json() const;
    static PairedSets from_json(const nlohmann::json& j);
};

struct PipelineConfig {
    int levels = 1;
    double tau = 0.85;
    int min_pair_size = 20;
    int ngen_floor = 20;
    std::optional<int> sample_m; // default: min retained count across levels
    std::uint64_t seed = 0;
};

struct PipelineManifest {
    PipelineConfig config;
    std::map<int, int> retained_after_pairing;
    std::map<int, int> retained_after_alignment;
    std::map<int, int> retained_after_sampling;
    int n_gen = 0;

    nlohmann::json to_json() const;
};

// Caption-to-image pairing for one complexity level: image ids whose cosine
// similarity with the caption embedding is >= tau; captions with fewer than
// min_pair_size matches are dropped.
std::map<int, std::set<std::string>> pair(const std::vector<EmbeddingRecord>& records, int level, double tau,
                                          int min_pair_size = 20);

// Alignment fixed-point loop: intersect every set with the common pool
// (intersection over levels of per-level unions), delete captions whose set
// drops below ngen_floor, repeat until the common pool size is stable. On
// return, the intersection-over-unions equals the union-over-everything.
// `iterations` (optional) receives the number of loop passes executed.
PairedSets align(const PairedSets& paired, int ngen_floor, int* iterations = nullptr);

// Uniform sample without replacement of exactly m caption indices per level.
PairedSets subsample_captions(const PairedSets& aligned, int m, std::uint64_t seed);

// Smallest set cardinality over all selected captions and levels.
int compute_ngen(const PairedSets& selected);

std::vector<EmbeddingRecord> load_records_jsonl(const std::string& path);

// pair -> align -> subsample -> compute_ngen; persists paired.json,
// manifest.json and per-level prompt lists under out_dir.
PipelineManifest run_pipeline(const std::string& dataset_path, const PipelineConfig& cfg,
                              const std::string& out_dir);

} // namespace mixlab

#endif
