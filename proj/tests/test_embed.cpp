#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "test_support.hpp"

using namespace explaingrade;
using providers::EmbeddingVector;
using testsupport::TempDir;

TEST_CASE("cosine similarity worked values", "[embed]") {
    EmbeddingVector a{{1, 2, 3}, "m"};
    EmbeddingVector b{{4, 5, 6}, "m"};
    REQUIRE(embed::cosine_similarity(a, b) == Catch::Approx(0.974631846).margin(1e-9));

    EmbeddingVector self{{1, 2, 3}, "m"};
    REQUIRE(embed::cosine_similarity(self, self) == Catch::Approx(1.0).margin(1e-9));

    EmbeddingVector ex{{1, 0}, "m"};
    EmbeddingVector ey{{0, 1}, "m"};
    REQUIRE(embed::cosine_similarity(ex, ey) == Catch::Approx(0.0).margin(1e-12));

    EmbeddingVector neg{{-1, -2, -3}, "m"};
    REQUIRE(embed::cosine_similarity(a, neg) == Catch::Approx(-1.0).margin(1e-9));
}

TEST_CASE("cosine error paths", "[embed]") {
    EmbeddingVector a{{1, 2}, "m"};
    EmbeddingVector b{{1, 2, 3}, "m"};
    REQUIRE_THROWS_AS(embed::cosine_similarity(a, b), DimensionMismatchError);
    EmbeddingVector zero{{0, 0}, "m"};
    REQUIRE_THROWS_AS(embed::cosine_similarity(a, zero), ZeroNormVectorError);
    EmbeddingVector empty{{}, "m"};
    REQUIRE_THROWS_AS(embed::cosine_similarity(empty, empty), ZeroNormVectorError);
}

TEST_CASE("cosine properties over random vectors", "[embed][property]") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t dims = 1 + rng() % 16;
        EmbeddingVector a{{}, "m"};
        EmbeddingVector b{{}, "m"};
        for (std::size_t i = 0; i < dims; ++i) {
            a.values.push_back(util::unit_draw(rng) * 4.0 - 2.0);
            b.values.push_back(util::unit_draw(rng) * 4.0 - 2.0);
        }
        bool a_zero = std::all_of(a.values.begin(), a.values.end(),
                                  [](double v) { return v == 0.0; });
        bool b_zero = std::all_of(b.values.begin(), b.values.end(),
                                  [](double v) { return v == 0.0; });
        if (a_zero || b_zero) continue;

        double ab = embed::cosine_similarity(a, b);
        double ba = embed::cosine_similarity(b, a);
        REQUIRE(ab == ba);  // exact symmetry
        REQUIRE(ab >= -1.0);
        REQUIRE(ab <= 1.0);

        for (double alpha : {0.5, 2.0, 10.0}) {
            EmbeddingVector scaled = a;
            for (double& v : scaled.values) v *= alpha;
            REQUIRE(embed::cosine_similarity(scaled, b) == Catch::Approx(ab).margin(1e-9));
        }
    }
}

TEST_CASE("huge components do not overflow", "[embed]") {
    EmbeddingVector a{{1e200, 2e200}, "m"};
    EmbeddingVector b{{1e-200, 2e-200}, "m"};
    REQUIRE(embed::cosine_similarity(a, b) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("score_pairs basics", "[embed]") {
    SECTION("empty dataset gives an empty list") {
        corpus::Dataset ds;
        testsupport::HashEmbedder embedder;
        REQUIRE(embed::score_pairs(ds, embedder).empty());
    }
    SECTION("identical student and expert text scores 1") {
        auto ds = testsupport::make_dataset(1, 0);
        ds.records[0].expert_explanation = ds.records[0].student_explanation;
        testsupport::HashEmbedder embedder;
        auto pairs = embed::score_pairs(ds, embedder);
        REQUIRE(pairs.size() == 1);
        REQUIRE(pairs[0].score == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(pairs[0].scorer_id == "mock-embed");
        REQUIRE(pairs[0].record_id == "r001");
    }
}

TEST_CASE("score_pairs matches hand-computed cosines of scripted vectors", "[embed]") {
    auto ds = testsupport::make_dataset(3, 0);
    std::map<std::string, std::vector<double>> table;
    table[ds.records[0].student_explanation] = {1, 0};
    table[ds.records[0].expert_explanation] = {0, 1};
    table[ds.records[1].student_explanation] = {1, 1};
    table[ds.records[1].expert_explanation] = {1, 0};
    table[ds.records[2].student_explanation] = {2, 4, 6};
    table[ds.records[2].expert_explanation] = {1, 2, 3};
    // records 1 and 2 share line-indexed expert text only if lines collide;
    // make_dataset gives each record its own line here (lines=4)
    testsupport::TableEmbedder embedder("tbl", table);
    auto pairs = embed::score_pairs(ds, embedder);
    REQUIRE(pairs[0].score == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(pairs[1].score == Catch::Approx(0.7071067811865475).margin(1e-9));
    REQUIRE(pairs[2].score == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("score_pairs is deterministic and order-stable under parallelism", "[embed]") {
    auto ds = testsupport::make_dataset(24, 8);
    testsupport::HashEmbedder embedder;
    auto serial = embed::score_pairs(ds, embedder, 1);
    auto parallel = embed::score_pairs(ds, embedder, 8);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        REQUIRE(serial[i].record_id == parallel[i].record_id);
        REQUIRE(serial[i].score == parallel[i].score);  // bitwise
    }
}

TEST_CASE("provider failures carry the offending record id", "[embed]") {
    auto ds = testsupport::make_dataset(3, 0);
    class Failing : public providers::EmbeddingProvider {
    public:
        providers::EmbeddingVector embed(const std::string& text) override {
            if (text.find("number 2") != std::string::npos) {
                throw TransportError("scripted outage");
            }
            return providers::EmbeddingVector{{1.0, 2.0}, "f"};
        }
        const std::string& model_name() const override { return name_; }

    private:
        std::string name_ = "f";
    } embedder;
    try {
        embed::score_pairs(ds, embedder, 1);
        FAIL("expected provider error");
    } catch (const Error& e) {
        REQUIRE(e.category() == ErrorCategory::Provider);
        REQUIRE(std::string(e.what()).find("r002") != std::string::npos);
    }
}

TEST_CASE("external score import", "[embed]") {
    auto ds = testsupport::make_dataset(3, 1);
    TempDir dir("ext-scores");
    auto file = dir.path() / "scores.jsonl";

    SECTION("happy path") {
        std::ofstream(file) << R"({"record_id":"r001","score":0.55})" << "\n";
        auto out = embed::import_external_scores(file, "external:deep-tutor", ds);
        REQUIRE(out.pairs.size() == 1);
        REQUIRE(out.pairs[0] ==
                embed::ScorePair{"r001", 0.55, "external:deep-tutor"});
        REQUIRE(out.warnings.empty());
    }
    SECTION("out-of-range score is fatal") {
        std::ofstream(file) << R"({"record_id":"r001","score":1.2})" << "\n";
        REQUIRE_THROWS_AS(embed::import_external_scores(file, "x", ds), OutOfRangeScoreError);
    }
    SECTION("unknown record id warns, or throws under strict") {
        std::ofstream(file) << R"({"record_id":"ghost","score":0.5})" << "\n";
        auto out = embed::import_external_scores(file, "x", ds);
        REQUIRE(out.pairs.empty());
        REQUIRE(out.warnings.size() == 1);
        REQUIRE(out.warnings[0].find("ghost") != std::string::npos);
        REQUIRE_THROWS_AS(embed::import_external_scores(file, "x", ds, true),
                          UnknownRecordIdError);
    }
    SECTION("bulk import at evaluation scale") {
        auto big = testsupport::make_dataset(1794, 1794, 6);
        std::ofstream out(file);
        std::mt19937_64 rng(3);
        for (const auto& rec : big.records) {
            out << nlohmann::json{{"record_id", rec.record_id},
                                  {"score", util::unit_draw(rng)}}
                       .dump()
                << "\n";
        }
        out.close();
        auto imported = embed::import_external_scores(file, "external:deep-tutor", big);
        REQUIRE(imported.pairs.size() == 3588);
    }
}

TEST_CASE("score pairs save/load round-trip", "[embed]") {
    TempDir dir("score-io");
    std::vector<embed::ScorePair> pairs = {{"r1", 0.123456789012345, "s"},
                                           {"r2", -0.5, "s"},
                                           {"r3", 1.0, "s"}};
    auto file = dir.path() / "scores.jsonl";
    embed::save_score_pairs(pairs, file);
    auto back = embed::load_score_pairs(file);
    REQUIRE(back == pairs);
}
