#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixlab/pipeline.hpp"
#include "mixlab/rng.hpp"

using namespace mixlab;

#ifndef MIXLAB_TEST_DATA_DIR
#define MIXLAB_TEST_DATA_DIR "tests/data"
#endif

namespace {

// Stub captioner for synthetic fixtures: derives the level-k caption from
// the record id and places records on axis-aligned cluster embeddings.
std::vector<EmbeddingRecord> two_cluster_records(int per_cluster) {
    std::vector<EmbeddingRecord> records;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < per_cluster; ++i) {
            EmbeddingRecord r;
            r.image_id = "c" + std::to_string(c) + "-" + std::to_string(i);
            r.embedding = c == 0 ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
            r.captions[1] = r.image_id + "-l1";
            r.caption_embeddings[1] = r.embedding;
            records.push_back(std::move(r));
        }
    }
    return records;
}

std::set<std::string> ids(std::initializer_list<const char*> xs) {
    std::set<std::string> s;
    for (const char* x : xs) s.insert(x);
    return s;
}

PairedSets hand_fixture() {
    PairedSets p;
    p.levels[1][0] = ids({"1", "2", "3"}); // a
    p.levels[1][1] = ids({"4", "5", "6"}); // b
    p.levels[2][0] = ids({"1", "2", "3", "4"}); // c
    return p;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("pairing by cosine similarity") {
    SUBCASE("exact self-similarity survives a 0.999 threshold") {
        std::vector<EmbeddingRecord> records = two_cluster_records(2);
        const auto sets = pair(records, 1, 0.999, 1);
        REQUIRE(sets.count(0) == 1);
        CHECK(sets.at(0).count("c0-0") == 1);
        CHECK(sets.at(0).count("c0-1") == 1);
        CHECK(sets.at(0).count("c1-0") == 0);
    }
    SUBCASE("tau = -1 pairs everything") {
        std::vector<EmbeddingRecord> records = two_cluster_records(3);
        const auto sets = pair(records, 1, -1.0, 1);
        REQUIRE(sets.size() == records.size());
        for (const auto& [idx, s] : sets) CHECK(s.size() == records.size());
    }
    SUBCASE("orthogonal clusters pair exactly their members; the floor drops them") {
        std::vector<EmbeddingRecord> records = two_cluster_records(15); // 30 records
        const auto sets = pair(records, 1, 0.9, 1);
        REQUIRE(sets.size() == 30);
        for (const auto& [idx, s] : sets) {
            CHECK(s.size() == 15);
            const bool first_cluster = idx < 15;
            CHECK(s.count(first_cluster ? "c0-0" : "c1-0") == 1);
            CHECK(s.count(first_cluster ? "c1-0" : "c0-0") == 0);
        }
        CHECK(pair(records, 1, 0.9, 20).empty());
    }
    SUBCASE("missing caption embeddings are an error") {
        std::vector<EmbeddingRecord> records = two_cluster_records(2);
        CHECK_THROWS_AS(pair(records, 2, 0.5, 1), DataError);
    }
}

TEST_CASE("alignment implements the fixed-point loop") {
    SUBCASE("hand-traced fixture: two iterations, b deleted") {
        int iters = 0;
        const PairedSets out = align(hand_fixture(), 3, &iters);
        CHECK(iters == 2);
        REQUIRE(out.levels.at(1).size() == 1);
        REQUIRE(out.levels.at(2).size() == 1);
        CHECK(out.levels.at(1).count(1) == 0); // b is gone
        CHECK(out.levels.at(1).at(0) == ids({"1", "2", "3"}));
        CHECK(out.levels.at(2).at(0) == ids({"1", "2", "3"}));
        CHECK(compute_ngen(out) == 3);
    }
    SUBCASE("identical sets are already a fixed point") {
        PairedSets p;
        p.levels[1][0] = ids({"x", "y", "z"});
        p.levels[2][4] = ids({"x", "y", "z"});
        int iters = 0;
        const PairedSets out = align(p, 2, &iters);
        CHECK(iters == 1);
        CHECK(out.levels.at(1).at(0) == p.levels.at(1).at(0));
        CHECK(out.levels.at(2).at(4) == p.levels.at(2).at(4));
    }
    SUBCASE("collapse raises an error naming the level") {
        PairedSets p;
        p.levels[1][0] = ids({"1", "2"});
        p.levels[2][0] = ids({"3", "4"});
        CHECK_THROWS_WITH_AS(align(p, 2), doctest::Contains("alignment-collapsed"), DataError);
    }
}

TEST_CASE("alignment properties on randomized datasets") {
    RngStream rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        const int levels = 2 + static_cast<int>(rng.below(3));
        const int floor = 1 + static_cast<int>(rng.below(2)); // 1..2
        PairedSets p;
        for (int l = 1; l <= levels; ++l) {
            const int captions = 1 + static_cast<int>(rng.below(6));
            for (int c = 0; c < captions; ++c) {
                // Always include ids 0 and 1 so the common pool never empties.
                std::set<std::string> s = {"0", "1"};
                const int extra = static_cast<int>(rng.below(7));
                for (int e = 0; e < extra; ++e) s.insert(std::to_string(2 + rng.below(8)));
                p.levels[l][c] = std::move(s);
            }
        }
        const PairedSets out = align(p, floor);

        // Post-condition: intersection over level unions == union over all.
        std::set<std::string> all;
        std::set<std::string> common;
        bool first = true;
        for (const auto& [level, caps] : out.levels) {
            std::set<std::string> u;
            for (const auto& [idx, s] : caps) u.insert(s.begin(), s.end());
            all.insert(u.begin(), u.end());
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
        CHECK(common == all);

        // Monotone: no new captions, no new ids, floor respected.
        for (const auto& [level, caps] : out.levels) {
            for (const auto& [idx, s] : caps) {
                REQUIRE(p.levels.at(level).count(idx) == 1);
                const auto& orig = p.levels.at(level).at(idx);
                CHECK(static_cast<int>(s.size()) >= floor);
                for (const auto& id : s) CHECK(orig.count(id) == 1);
            }
        }

        // Idempotence.
        int iters2 = 0;
        const PairedSets again = align(out, floor, &iters2);
        CHECK(iters2 == 1);
        CHECK(again.levels == out.levels);
    }
}

TEST_CASE("caption subsampling") {
    PairedSets p;
    for (int c = 0; c < 5; ++c) p.levels[1][c] = ids({"0", "1"});
    p.levels[1][0].insert("9");

    SUBCASE("full sample is the identity") {
        const PairedSets out = subsample_captions(p, 5, 7);
        CHECK(out.levels.at(1) == p.levels.at(1));
    }
    SUBCASE("deterministic per seed") {
        const PairedSets a = subsample_captions(p, 2, 7);
        const PairedSets b = subsample_captions(p, 2, 7);
        CHECK(a.levels == b.levels);
    }
    SUBCASE("oversampling is an error") { CHECK_THROWS_AS(subsample_captions(p, 6, 7), DataError); }
    SUBCASE("m = 1 selects uniformly") {
        int counts[5] = {0, 0, 0, 0, 0};
        for (std::uint64_t seed = 0; seed < 10000; ++seed) {
            const PairedSets out = subsample_captions(p, 1, seed);
            ++counts[out.levels.at(1).begin()->first];
        }
        for (int c = 0; c < 5; ++c) {
            CHECK(counts[c] > 2000 - 120); // 3 sigma binomial band around n/5
            CHECK(counts[c] < 2000 + 120);
        }
    }
}

TEST_CASE("n_gen is the smallest selected cardinality") {
    PairedSets p;
    p.levels[1][0] = ids({"a", "b", "c", "d"});
    p.levels[1][1] = ids({"a", "b", "c", "d", "e"});
    p.levels[2][0] = ids({"a", "b", "c", "d", "e", "f"});
    CHECK(compute_ngen(p) == 4);
    PairedSets q;
    q.levels[1][0] = ids({"a", "b"});
    q.levels[2][0] = ids({"c", "d"});
    CHECK(compute_ngen(q) == 2);
}

TEST_CASE("end-to-end pipeline on the shipped fixture") {
    const std::string dataset = std::string(MIXLAB_TEST_DATA_DIR) + "/pipeline_fixture.jsonl";
    PipelineConfig cfg;
    cfg.levels = 2;
    cfg.tau = 0.5;
    cfg.min_pair_size = 3;
    cfg.ngen_floor = 3;
    cfg.seed = 5;

    const std::string out_dir = "pipeline_fixture_out";
    const PipelineManifest manifest = run_pipeline(dataset, cfg, out_dir);
    CHECK(manifest.retained_after_pairing.at(1) == 2);
    CHECK(manifest.retained_after_pairing.at(2) == 1);
    CHECK(manifest.retained_after_alignment.at(1) == 1);
    CHECK(manifest.retained_after_alignment.at(2) == 1);
    CHECK(manifest.retained_after_sampling.at(1) == 1);
    CHECK(manifest.n_gen == 3);

    // The surviving captions are "a" (level 1) and "c" (level 2).
    CHECK(read_file(std::filesystem::path(out_dir) / "prompts_level1.txt") == "a\n");
    CHECK(read_file(std::filesystem::path(out_dir) / "prompts_level2.txt") == "c\n");

    // Reruns are byte-identical.
    const std::string paired1 = read_file(std::filesystem::path(out_dir) / "paired.json");
    const std::string manifest1 = read_file(std::filesystem::path(out_dir) / "manifest.json");
    run_pipeline(dataset, cfg, out_dir);
    CHECK(read_file(std::filesystem::path(out_dir) / "paired.json") == paired1);
    CHECK(read_file(std::filesystem::path(out_dir) / "manifest.json") == manifest1);

    SUBCASE("empty dataset fails at the pairing stage") {
        const std::string empty_path = "pipeline_empty.jsonl";
        std::ofstream(empty_path).close();
        CHECK_THROWS_WITH_AS(run_pipeline(empty_path, cfg, out_dir), doctest::Contains("pairing"), DataError);
    }
}
