// Builds a replay archive for the offline demo pipeline.
//
// Runs the same library calls the CLI issues (augment -> score -> judge) with
// deterministic scripted providers, records every canonical response into a
// cache keyed exactly as the real clients key their requests, and exports the
// cache as an archive. A CLI run with the imported archive then replays the
// whole pipeline offline.

#include <filesystem>
#include <iostream>
#include <string>

#include "explaingrade/explaingrade.hpp"

namespace fs = std::filesystem;
using namespace explaingrade;

namespace {

// Deterministic vector from the text digest: 8 components in [0, 1].
std::vector<double> scripted_embedding(const std::string& text) {
    std::string digest = util::sha256_hex(text);
    std::vector<double> values;
    values.reserve(8);
    for (std::size_t i = 0; i < 8; ++i) {
        unsigned byte = std::stoul(digest.substr(i * 2, 2), nullptr, 16);
        values.push_back(static_cast<double>(byte) / 255.0);
    }
    return values;
}

std::string scripted_generation(const std::string& prompt) {
    std::string tag = util::sha256_hex(prompt).substr(0, 8);
    nlohmann::json out = {
        {"incorrectExplanations",
         {"This line deallocates the buffer " + tag + " before it is used.",
          "This line spawns a background thread called " + tag + ".",
          "This line rounds every value toward " + tag + " by mistake."}}};
    return out.dump();
}

std::string scripted_verdict(const std::string& prompt) {
    unsigned nibble = static_cast<unsigned>(util::sha256_hex(prompt)[0]);
    return nibble % 2 == 0 ? "Correctness: 1" : "Correctness: 0";
}

class RecordingChat : public providers::ChatProvider {
public:
    RecordingChat(providers::ResponseCache& cache,
                  std::function<std::string(const std::string&)> script)
        : cache_(cache), script_(std::move(script)) {}

    providers::ChatResponse complete(const providers::ChatRequest& request) override {
        request.validate();
        std::string content = script_(request.messages.back().content);
        std::string body = providers::canonical_chat_body(content, "stop", {});
        cache_.store(providers::chat_cache_key(request), "chat", request.model_name, body);
        providers::ChatResponse response;
        response.content = content;
        response.finish_reason = "stop";
        return response;
    }

private:
    providers::ResponseCache& cache_;
    std::function<std::string(const std::string&)> script_;
};

class RecordingEmbedder : public providers::EmbeddingProvider {
public:
    RecordingEmbedder(providers::ResponseCache& cache, std::string model)
        : cache_(cache), model_(std::move(model)) {}

    providers::EmbeddingVector embed(const std::string& text) override {
        auto values = scripted_embedding(text);
        cache_.store(providers::embedding_cache_key(model_, text), "embeddings", model_,
                     providers::canonical_embedding_body(model_, values));
        return providers::EmbeddingVector{values, model_};
    }

    const std::string& model_name() const override { return model_; }

private:
    providers::ResponseCache& cache_;
    std::string model_;
};

}  // namespace

int main(int argc, char** argv) {
    std::string corpus_dir;
    std::string archive;
    std::string gen_model = "mock-gen";
    std::string judge_model = "mock-judge";
    std::string embed_model = "mock-embed";
    for (int i = 1; i + 1 < argc; i += 2) {
        std::string flag = argv[i];
        std::string value = argv[i + 1];
        if (flag == "--corpus") corpus_dir = value;
        else if (flag == "--archive") archive = value;
        else if (flag == "--gen-model") gen_model = value;
        else if (flag == "--judge-model") judge_model = value;
        else if (flag == "--embed-model") embed_model = value;
    }
    if (corpus_dir.empty() || archive.empty()) {
        std::cerr << "usage: make_replay_fixture --corpus <dataset dir> --archive <out file>\n";
        return 1;
    }

    try {
        corpus::Dataset dataset = corpus::load_dataset(corpus_dir);
        dataset = corpus::filter_single_statement(dataset);

        fs::path cache_dir = fs::path(archive).parent_path() / "fixture-cache";
        fs::remove_all(cache_dir);
        providers::ResponseCache cache(cache_dir);

        // augment
        RecordingChat generator(cache, scripted_generation);
        augment::BalanceConfig balance_cfg;
        balance_cfg.generator_model = gen_model;
        corpus::Dataset balanced = augment::balance_dataset(dataset, generator, balance_cfg);

        // score
        RecordingEmbedder embedder(cache, embed_model);
        auto pairs = embed::score_pairs(balanced, embedder);

        // judge (behavior variant, like the demo pipeline)
        RecordingChat judge_provider(cache, scripted_verdict);
        judge::JudgeConfig judge_cfg;
        judge_cfg.model_name = judge_model;
        auto verdicts =
            judge::judge_records(balanced, judge::RubricVariant::Behavior, judge_provider,
                                 judge_cfg);

        cache.export_archive(archive);
        std::cout << "Recorded " << cache.size() << " responses (" << balanced.records.size()
                  << " balanced records, " << pairs.size() << " score pairs, "
                  << verdicts.size() << " verdicts) into " << archive << "\n";
        fs::remove_all(cache_dir);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "make_replay_fixture: " << e.what() << "\n";
        return 1;
    }
}
