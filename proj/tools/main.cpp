// explaingrade: scores student explanations of code lines as correct or
// incorrect, via embedding-similarity thresholds or an LLM judge, and
// evaluates both under stratified k-fold cross-validation.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "explaingrade/explaingrade.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace explaingrade;

namespace {

struct CommonOptions {
    std::string run;
    std::string cache_dir;
    std::string api_base;
    std::string config_file;
    std::size_t parallelism = 4;
    bool offline = false;
    bool strict = false;
};

struct RunPaths {
    fs::path run;

    fs::path corpus() const { return run / "corpus"; }
    fs::path balanced() const { return run / "balanced"; }
    fs::path scores() const { return run / "scores"; }
    fs::path judgments() const { return run / "judgments"; }
    fs::path eval() const { return run / "eval"; }
    fs::path verification() const { return run / "verification"; }
    fs::path manifests() const { return run / "manifests"; }
};

std::string sanitize_id(const std::string& id) {
    std::string out;
    for (char c : id) {
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
    }
    return out;
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    json obj = json::parse(util::read_file(path), nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw ValidationError("config file " + path,
                              {{0, "malformed-config", "", "not a JSON object"}});
    }
    return obj;
}

providers::ProviderConfig make_provider_config(const CommonOptions& common) {
    providers::ProviderConfig cfg = providers::config_from_env();
    json file = load_config_file(common.config_file);
    if (!common.api_base.empty()) cfg.api_base = common.api_base;
    else if (cfg.api_base.empty()) cfg.api_base = file.value("api_base", "");
    if (cfg.api_key.empty()) cfg.api_key = file.value("api_key", "");
    cfg.parallelism = common.parallelism;
    cfg.offline = common.offline;
    return cfg;
}

fs::path resolve_cache_dir(const CommonOptions& common, const RunPaths& paths) {
    if (!common.cache_dir.empty()) return fs::path(common.cache_dir);
    return paths.run / "cache";
}

// The stage a command operates on: the balanced corpus once it exists,
// otherwise the ingested one.
fs::path stage_dir(const RunPaths& paths) {
    if (fs::exists(paths.balanced() / "records.jsonl")) return paths.balanced();
    return paths.corpus();
}

corpus::Dataset load_stage(const RunPaths& paths) {
    fs::path dir = stage_dir(paths);
    if (!fs::exists(dir / "records.jsonl")) {
        throw ValidationError("run directory " + paths.run.string(),
                              {{0, "missing-stage", "", "no ingested corpus; run ingest first"}});
    }
    return corpus::load_dataset(dir);
}

// ---- command manifests (resume bookkeeping) ----

fs::path manifest_path(const RunPaths& paths, const std::string& command) {
    return paths.manifests() / (command + ".json");
}

bool outputs_exist(const RunPaths& paths, const json& manifest) {
    for (const auto& rel : manifest.value("outputs", json::array())) {
        if (!fs::exists(paths.run / rel.get<std::string>())) return false;
    }
    return true;
}

// True when the command already ran with identical parameters and its
// outputs are still on disk.
bool up_to_date(const RunPaths& paths, const std::string& command, const json& params) {
    fs::path path = manifest_path(paths, command);
    if (!fs::exists(path)) return false;
    json manifest = json::parse(util::read_file(path), nullptr, false);
    if (manifest.is_discarded()) return false;
    return manifest.value("params", json::object()) == params && outputs_exist(paths, manifest);
}

void write_manifest(const RunPaths& paths, const std::string& command, const json& params,
                    const std::vector<std::string>& outputs) {
    json manifest = {{"command", command}, {"params", params}, {"outputs", outputs}};
    util::atomic_write_file(manifest_path(paths, command), manifest.dump(2) + "\n");
}

struct ScorerRef {
    enum class Kind { Similarity, External, Judge } kind;
    std::string full;   // roster string, e.g. "similarity:text-embedding-3-small"
    std::string value;  // model / scorer id / variant
};

ScorerRef parse_scorer(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos || colon + 1 >= text.size()) {
        throw ValidationError("scorer '" + text + "'",
                              {{0, "malformed-scorer", "",
                                "expected similarity:<model>, external:<id>, or judge:<variant>"}});
    }
    std::string kind = text.substr(0, colon);
    std::string value = text.substr(colon + 1);
    if (kind == "similarity") return {ScorerRef::Kind::Similarity, text, value};
    if (kind == "external") return {ScorerRef::Kind::External, text, value};
    if (kind == "judge") {
        if (!judge::variant_from_name(value)) {
            throw ValidationError("scorer '" + text + "'",
                                  {{0, "malformed-scorer", "",
                                    "variant must be no-definition, construction, or behavior"}});
        }
        return {ScorerRef::Kind::Judge, text, value};
    }
    throw ValidationError("scorer '" + text + "'",
                          {{0, "malformed-scorer", "", "unknown scorer kind '" + kind + "'"}});
}

// ---- subcommand bodies ----

int cmd_ingest(const CommonOptions& common, const std::string& input, const std::string& format,
               bool filter_single) {
    RunPaths paths{fs::path(common.run)};
    json params = {{"input", input}, {"format", format}, {"filter_single_statement", filter_single}};
    if (up_to_date(paths, "ingest", params)) {
        std::cout << "ingest: up to date\n";
        return 0;
    }
    corpus::FileFormat fmt =
        format == "csv" ? corpus::FileFormat::Csv : corpus::FileFormat::Jsonl;
    corpus::Dataset dataset = corpus::load_dataset(input, fmt);
    if (filter_single) {
        dataset = corpus::filter_single_statement(dataset);
        std::cout << dataset.filter_history.back() << "\n";
    }
    auto [correct, incorrect] = corpus::class_counts(dataset);
    corpus::save_dataset(dataset, paths.corpus());
    std::cout << "Ingested " << dataset.records.size() << " records (" << correct << " correct, "
              << incorrect << " incorrect)\n";
    write_manifest(paths, "ingest", params,
                   {"corpus/records.jsonl", "corpus/examples.jsonl"});
    return 0;
}

int cmd_augment(const CommonOptions& common, const std::string& gen_model, double temperature,
                int max_attempts) {
    RunPaths paths{fs::path(common.run)};
    json params = {{"generator_model", gen_model},
                   {"temperature", temperature},
                   {"max_attempts_per_line", max_attempts}};
    if (up_to_date(paths, "augment", params)) {
        std::cout << "augment: up to date\n";
        return 0;
    }
    if (!fs::exists(paths.corpus() / "records.jsonl")) {
        throw ValidationError("run directory " + paths.run.string(),
                              {{0, "missing-stage", "", "no ingested corpus; run ingest first"}});
    }
    corpus::Dataset dataset = corpus::load_dataset(paths.corpus());
    providers::ResponseCache cache(resolve_cache_dir(common, paths));
    providers::ProviderConfig provider_cfg = make_provider_config(common);
    providers::ChatClient client(provider_cfg,
                                 std::make_shared<providers::HttplibTransport>(
                                     provider_cfg.api_base),
                                 &cache);
    augment::BalanceConfig balance_cfg;
    balance_cfg.generator_model = gen_model;
    balance_cfg.temperature = temperature;
    balance_cfg.max_attempts_per_line = max_attempts;
    balance_cfg.parallelism = common.parallelism;
    corpus::Dataset balanced = augment::balance_dataset(dataset, client, balance_cfg);
    corpus::save_dataset(balanced, paths.balanced());
    auto [correct, incorrect] = corpus::class_counts(balanced);
    std::cout << "Balanced corpus: " << correct << " correct / " << incorrect
              << " incorrect (" << balanced.records.size() - dataset.records.size()
              << " synthetic negatives added)\n";
    write_manifest(paths, "augment", params,
                   {"balanced/records.jsonl", "balanced/examples.jsonl"});
    return 0;
}

void maybe_write_distribution_report(const RunPaths& paths, const corpus::Dataset& dataset,
                                     const std::vector<embed::ScorePair>& pairs,
                                     const std::string& file_stem) {
    std::vector<double> human_neg;
    std::vector<double> synth_neg;
    std::unordered_map<std::string, const corpus::ExplanationRecord*> by_id;
    for (const auto& rec : dataset.records) by_id[rec.record_id] = &rec;
    for (const auto& pair : pairs) {
        auto it = by_id.find(pair.record_id);
        if (it == by_id.end() || it->second->label != corpus::Label::Incorrect) continue;
        (it->second->provenance == corpus::Provenance::Human ? human_neg : synth_neg)
            .push_back(pair.score);
    }
    if (human_neg.empty() || synth_neg.empty()) return;
    augment::DistributionReport report =
        augment::compare_score_distributions(human_neg, synth_neg);
    util::atomic_write_file(paths.scores() / (file_stem + ".distribution.json"),
                            report.to_json().dump(2) + "\n");
    std::cout << report.render_text();
}

int cmd_score(const CommonOptions& common, const std::vector<std::string>& scorers,
              const std::string& scores_file, const std::string& embedding_model_flag) {
    RunPaths paths{fs::path(common.run)};
    corpus::Dataset dataset = load_stage(paths);
    for (const auto& text : scorers) {
        ScorerRef ref = parse_scorer(text);
        std::string stem = sanitize_id(ref.full);
        json params = {{"scorer", ref.full}, {"stage", stage_dir(paths).filename().string()}};
        if (ref.kind == ScorerRef::Kind::External) params["scores_file"] = scores_file;
        if (up_to_date(paths, "score-" + stem, params)) {
            std::cout << "score " << ref.full << ": up to date\n";
            continue;
        }
        std::vector<embed::ScorePair> pairs;
        if (ref.kind == ScorerRef::Kind::Similarity) {
            std::string model = embedding_model_flag.empty() ? ref.value : embedding_model_flag;
            providers::ResponseCache cache(resolve_cache_dir(common, paths));
            providers::ProviderConfig provider_cfg = make_provider_config(common);
            providers::EmbeddingClient embedder(
                provider_cfg,
                std::make_shared<providers::HttplibTransport>(provider_cfg.api_base), &cache,
                model);
            pairs = embed::score_pairs(dataset, embedder, common.parallelism);
            for (auto& pair : pairs) pair.scorer_id = ref.full;
        } else if (ref.kind == ScorerRef::Kind::External) {
            if (scores_file.empty()) {
                throw ValidationError("score " + ref.full,
                                      {{0, "missing-argument", "--scores-file",
                                        "external scorers need --scores-file"}});
            }
            embed::ExternalScores imported =
                embed::import_external_scores(scores_file, ref.full, dataset, common.strict);
            for (const auto& warning : imported.warnings) {
                std::cerr << "warning: " << warning << "\n";
            }
            pairs = std::move(imported.pairs);
        } else {
            throw ValidationError("score " + ref.full,
                                  {{0, "malformed-scorer", "",
                                    "judge scorers are produced by the judge command"}});
        }
        fs::create_directories(paths.scores());
        embed::save_score_pairs(pairs, paths.scores() / (stem + ".jsonl"));
        std::cout << "Scored " << pairs.size() << " records with " << ref.full << "\n";
        maybe_write_distribution_report(paths, dataset, pairs, stem);
        write_manifest(paths, "score-" + stem, params, {"scores/" + stem + ".jsonl"});
    }
    return 0;
}

int cmd_judge(const CommonOptions& common, const std::string& scorer_text,
              const std::string& judge_model, double temperature, int max_tokens) {
    RunPaths paths{fs::path(common.run)};
    ScorerRef ref = parse_scorer(scorer_text);
    if (ref.kind != ScorerRef::Kind::Judge) {
        throw ValidationError("judge " + scorer_text,
                              {{0, "malformed-scorer", "", "expected judge:<variant>"}});
    }
    judge::RubricVariant variant = *judge::variant_from_name(ref.value);
    corpus::Dataset dataset = load_stage(paths);
    std::string stem = sanitize_id(ref.full);
    json params = {{"scorer", ref.full},
                   {"model", judge_model},
                   {"temperature", temperature},
                   {"max_tokens", max_tokens},
                   {"stage", stage_dir(paths).filename().string()}};
    if (up_to_date(paths, "judge-" + stem, params)) {
        std::cout << "judge " << ref.full << ": up to date\n";
        return 0;
    }

    providers::ResponseCache cache(resolve_cache_dir(common, paths));
    providers::ProviderConfig provider_cfg = make_provider_config(common);
    providers::ChatClient client(provider_cfg,
                                 std::make_shared<providers::HttplibTransport>(
                                     provider_cfg.api_base),
                                 &cache);
    judge::JudgeConfig judge_cfg;
    judge_cfg.model_name = judge_model;
    judge_cfg.temperature = temperature;
    judge_cfg.max_tokens = max_tokens;

    std::vector<judge::AuditEntry> audit;
    std::vector<judge::Verdict> verdicts =
        judge::judge_records(dataset, variant, client, judge_cfg, common.parallelism,
                             [&audit](const judge::AuditEntry& e) { audit.push_back(e); });

    fs::create_directories(paths.judgments());
    std::string verdict_lines;
    for (const auto& v : verdicts) {
        verdict_lines += json{{"record_id", v.record_id},
                              {"predicted", corpus::label_name(v.predicted)},
                              {"variant", judge::variant_name(v.variant)},
                              {"parse_attempts", v.parse_attempts}}
                             .dump();
        verdict_lines += "\n";
    }
    std::string audit_lines;
    for (const auto& e : audit) {
        audit_lines += e.to_json().dump();
        audit_lines += "\n";
    }
    util::atomic_write_file(paths.judgments() / (stem + ".jsonl"), verdict_lines);
    util::atomic_write_file(paths.judgments() / (stem + ".audit.jsonl"), audit_lines);
    std::cout << "Judged " << verdicts.size() << " records with " << ref.full << "\n";
    write_manifest(paths, "judge-" + stem, params,
                   {"judgments/" + stem + ".jsonl", "judgments/" + stem + ".audit.jsonl"});
    return 0;
}

int cmd_evaluate(const CommonOptions& common, const std::vector<std::string>& scorer_texts,
                 int k, std::uint64_t seed, const std::string& aggregate_mode) {
    RunPaths paths{fs::path(common.run)};
    if (k < 2) {
        throw ValidationError("evaluate", {{0, "invalid-k", "--k", "k must be at least 2"}});
    }
    corpus::Dataset dataset = load_stage(paths);
    json params = {{"scorers", scorer_texts}, {"k", k}, {"seed", seed},
                   {"aggregate", aggregate_mode},
                   {"stage", stage_dir(paths).filename().string()}};
    if (up_to_date(paths, "evaluate", params)) {
        std::cout << "evaluate: up to date\n";
        return 0;
    }

    eval::FoldPlan plan = eval::stratified_kfold(dataset, k, seed);
    std::vector<eval::ScorerSpec> specs;
    // Keep the verdict maps alive for the JudgeScorer closures.
    auto verdict_maps =
        std::make_shared<std::vector<std::unordered_map<std::string, corpus::Label>>>();

    for (const auto& text : scorer_texts) {
        ScorerRef ref = parse_scorer(text);
        std::string stem = sanitize_id(ref.full);
        if (ref.kind == ScorerRef::Kind::Judge) {
            fs::path file = paths.judgments() / (stem + ".jsonl");
            if (!fs::exists(file)) {
                throw ValidationError("evaluate " + ref.full,
                                      {{0, "missing-input", "",
                                        "no judgments at " + file.string() +
                                            "; run judge first"}});
            }
            std::unordered_map<std::string, corpus::Label> verdicts;
            util::for_each_line(util::read_file(file), [&](std::size_t, const std::string& line) {
                json obj = json::parse(line);
                verdicts[obj.at("record_id").get<std::string>()] =
                    corpus::label_from_name(obj.at("predicted").get<std::string>())
                        .value_or(corpus::Label::Incorrect);
            });
            verdict_maps->push_back(std::move(verdicts));
            auto* map = &verdict_maps->back();
            specs.push_back(eval::JudgeScorer{
                ref.full, [map, full = ref.full](const corpus::ExplanationRecord& rec) {
                    auto it = map->find(rec.record_id);
                    if (it == map->end()) {
                        throw ValidationError("judge scorer " + full,
                                              {{0, "missing-verdict", "record_id",
                                                "no verdict for record '" + rec.record_id +
                                                    "'; re-run judge"}});
                    }
                    return it->second;
                }});
        } else {
            fs::path file = paths.scores() / (stem + ".jsonl");
            if (!fs::exists(file)) {
                throw ValidationError("evaluate " + ref.full,
                                      {{0, "missing-input", "",
                                        "no scores at " + file.string() + "; run score first"}});
            }
            eval::SimilarityScorer sim;
            sim.id = ref.full;
            for (const auto& pair : embed::load_score_pairs(file)) {
                sim.scores[pair.record_id] = pair.score;
            }
            specs.push_back(std::move(sim));
        }
    }

    eval::ExperimentConfig cfg;
    cfg.mode = aggregate_mode == "macro" ? eval::AggregateMode::Macro : eval::AggregateMode::Micro;
    auto [correct, incorrect] = corpus::class_counts(dataset);
    cfg.provenance = {{"stage", stage_dir(paths).filename().string()},
                      {"records", dataset.records.size()},
                      {"correct", correct},
                      {"incorrect", incorrect},
                      {"scorers", scorer_texts}};
    fs::path cache_dir = resolve_cache_dir(common, paths);
    if (fs::exists(cache_dir / "manifest.jsonl")) {
        cfg.provenance["cache_digest"] = providers::ResponseCache(cache_dir).content_digest();
    }

    eval::ExperimentResult result = eval::run_experiment(dataset, plan, specs, cfg);

    fs::create_directories(paths.eval() / "predictions");
    util::atomic_write_file(paths.eval() / "result.json",
                            eval::render_report(result, eval::ReportFormat::Machine));
    util::atomic_write_file(paths.eval() / "fold_plan.json", plan.to_json().dump(2) + "\n");
    std::vector<std::string> outputs = {"eval/result.json", "eval/fold_plan.json"};
    for (const auto& scorer : result.scorers) {
        std::string lines;
        for (std::size_t f = 0; f < scorer.folds.size(); ++f) {
            for (const auto& [id, label] : scorer.folds[f].predictions) {
                lines += json{{"record_id", id},
                              {"fold", f + 1},
                              {"predicted", corpus::label_name(label)}}
                             .dump();
                lines += "\n";
            }
        }
        std::string rel = "eval/predictions/" + sanitize_id(scorer.id) + ".jsonl";
        util::atomic_write_file(paths.run / rel, lines);
        outputs.push_back(rel);
    }
    std::cout << eval::render_report(result, eval::ReportFormat::TextTable);
    write_manifest(paths, "evaluate", params, outputs);
    return 0;
}

int cmd_report(const CommonOptions& common, const std::string& format_name) {
    RunPaths paths{fs::path(common.run)};
    fs::path result_file = paths.eval() / "result.json";
    if (!fs::exists(result_file)) {
        throw ValidationError("report",
                              {{0, "missing-input", "",
                                "no experiment result at " + result_file.string() +
                                    "; run evaluate first"}});
    }
    auto format = eval::report_format_from_name(format_name);
    if (!format) {
        throw ValidationError("report", {{0, "malformed-argument", "--format",
                                          "expected text-table, csv, or machine"}});
    }
    eval::ExperimentResult result =
        eval::ExperimentResult::from_json(json::parse(util::read_file(result_file)));
    std::string rendered = eval::render_report(result, *format);
    const char* ext = *format == eval::ReportFormat::Csv
                          ? "csv"
                          : (*format == eval::ReportFormat::Machine ? "json" : "txt");
    util::atomic_write_file(paths.run / (std::string("report.") + ext), rendered);
    std::cout << rendered;
    return 0;
}

int cmd_verify_sample(const CommonOptions& common, std::size_t n, std::uint64_t seed) {
    RunPaths paths{fs::path(common.run)};
    corpus::Dataset dataset = load_stage(paths);
    augment::VerificationSample sample = augment::sample_for_verification(dataset, n, seed);
    std::string sheet = augment::render_annotation_sheet(dataset, sample);
    std::string name = "sample-n" + std::to_string(n) + "-s" + std::to_string(seed) + ".csv";
    util::atomic_write_file(paths.verification() / name, sheet);
    std::cout << "Wrote " << n << "-record verification sheet to "
              << (paths.verification() / name).string() << "\n";
    json params = {{"n", n}, {"seed", seed}};
    write_manifest(paths, "verify-sample", params, {"verification/" + name});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"explaingrade: automated scoring of student code-line explanations"};
    app.require_subcommand(1);

    CommonOptions common;
    std::string input;
    std::string format = "jsonl";
    bool filter_single = true;
    std::string gen_model = "gpt-oss-20b";
    std::string judge_model = "gpt-3.5-turbo-16k";
    std::string embedding_model;
    double gen_temperature = 0.8;
    double judge_temperature = 0.0;
    int judge_max_tokens = 8;
    int max_attempts = 10;
    std::vector<std::string> scorers;
    std::string scorer_single;
    std::string scores_file;
    std::string report_format = "text-table";
    std::string aggregate_mode = "micro";
    int k = 5;
    std::uint64_t seed = 17;
    std::size_t sample_n = 100;
    std::string archive;

    auto add_common = [&](CLI::App* cmd, bool needs_run = true) {
        auto* run_opt = cmd->add_option("--run", common.run, "experiment directory");
        if (needs_run) run_opt->required();
        cmd->add_option("--cache-dir", common.cache_dir,
                        "response cache directory (default: <run>/cache)");
        cmd->add_option("--api-base", common.api_base, "endpoint base URL");
        cmd->add_option("--config", common.config_file, "JSON config file (api_base, api_key)");
        cmd->add_option("--parallelism", common.parallelism, "max in-flight requests")
            ->check(CLI::PositiveNumber);
        cmd->add_flag("--offline", common.offline,
                      "forbid network; cache misses become hard errors");
        cmd->add_flag("--strict", common.strict, "strict mode for importers");
    };

    auto* ingest = app.add_subcommand("ingest", "load, validate, and filter a corpus");
    add_common(ingest);
    ingest->add_option("--dataset,--input", input, "records file or dataset directory")
        ->required();
    ingest->add_option("--format", format, "jsonl or csv")
        ->check(CLI::IsMember({"jsonl", "csv"}));
    ingest->add_flag("--filter-single-statement,!--no-filter-single-statement", filter_single,
                     "keep only single-sentence explanation pairs (default on)");

    auto* augment_cmd = app.add_subcommand("augment", "balance classes with synthetic negatives");
    add_common(augment_cmd);
    augment_cmd->add_option("--gen-model", gen_model, "generator model name");
    augment_cmd->add_option("--temperature", gen_temperature, "generator temperature");
    augment_cmd->add_option("--max-attempts", max_attempts, "generation attempts per line");

    auto* score = app.add_subcommand("score", "compute or import similarity scores");
    add_common(score);
    score->add_option("--scorer", scorers, "similarity:<model> or external:<id> (repeatable)")
        ->required();
    score->add_option("--scores-file", scores_file, "external score file (external scorers)");
    score->add_option("--embedding-model", embedding_model,
                      "override the embedding model name");

    auto* judge_cmd = app.add_subcommand("judge", "run the LLM judge over the corpus");
    add_common(judge_cmd);
    judge_cmd->add_option("--scorer", scorer_single, "judge:<variant>")->required();
    judge_cmd->add_option("--judge-model", judge_model, "judge model name");
    judge_cmd->add_option("--temperature", judge_temperature, "judge temperature");
    judge_cmd->add_option("--max-tokens", judge_max_tokens, "judge completion budget");

    auto* evaluate = app.add_subcommand("evaluate", "k-fold evaluation of configured scorers");
    add_common(evaluate);
    evaluate->add_option("--scorer", scorers, "scorer roster entry (repeatable)")->required();
    evaluate->add_option("--k", k, "fold count (default 5)");
    evaluate->add_option("--seed", seed, "fold assignment seed");
    evaluate->add_option("--aggregate", aggregate_mode, "micro or macro")
        ->check(CLI::IsMember({"micro", "macro"}));

    auto* report = app.add_subcommand("report", "render the experiment result");
    add_common(report);
    report->add_option("--format", report_format, "text-table, csv, or machine");

    auto* verify = app.add_subcommand("verify-sample",
                                      "sample synthetic negatives for human verification");
    add_common(verify);
    verify->add_option("--n", sample_n, "sample size");
    verify->add_option("--seed", seed, "sampling seed");

    auto* cache_cmd = app.add_subcommand("cache", "export / import the response cache");
    auto* cache_export = cache_cmd->add_subcommand("export", "write a replay archive");
    auto* cache_import = cache_cmd->add_subcommand("import", "load a replay archive");
    for (auto* sub : {cache_export, cache_import}) {
        sub->add_option("--cache-dir", common.cache_dir, "cache directory")->required();
        sub->add_option("--archive", archive, "archive file")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(common, input, format, filter_single);
        if (augment_cmd->parsed()) {
            return cmd_augment(common, gen_model, gen_temperature, max_attempts);
        }
        if (score->parsed()) return cmd_score(common, scorers, scores_file, embedding_model);
        if (judge_cmd->parsed()) {
            return cmd_judge(common, scorer_single, judge_model, judge_temperature,
                             judge_max_tokens);
        }
        if (evaluate->parsed()) return cmd_evaluate(common, scorers, k, seed, aggregate_mode);
        if (report->parsed()) return cmd_report(common, report_format);
        if (verify->parsed()) return cmd_verify_sample(common, sample_n, seed);
        if (cache_cmd->parsed()) {
            providers::ResponseCache cache{fs::path(common.cache_dir)};
            if (cache_export->parsed()) {
                cache.export_archive(archive);
                std::cout << "Exported " << cache.size() << " cache entries to " << archive
                          << "\n";
            } else if (cache_import->parsed()) {
                cache.import_archive(archive);
                std::cout << "Imported archive " << archive << " (" << cache.size()
                          << " entries)\n";
            } else {
                std::cerr << "cache: choose export or import\n";
                return 1;
            }
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
