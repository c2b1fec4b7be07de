#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "explaingrade/corpus.hpp"
#include "explaingrade/errors.hpp"
#include "explaingrade/prompts.hpp"
#include "explaingrade/providers.hpp"
#include "explaingrade/util.hpp"

namespace explaingrade::judge {

using nlohmann::json;

enum class RubricVariant { NoDefinition, Construction, Behavior };

inline std::string variant_name(RubricVariant v) {
    switch (v) {
        case RubricVariant::NoDefinition: return "no-definition";
        case RubricVariant::Construction: return "construction";
        case RubricVariant::Behavior: return "behavior";
    }
    return "unknown";
}

inline std::optional<RubricVariant> variant_from_name(std::string_view name) {
    if (name == "no-definition" || name == "nodef") return RubricVariant::NoDefinition;
    if (name == "construction") return RubricVariant::Construction;
    if (name == "behavior") return RubricVariant::Behavior;
    return std::nullopt;
}

inline std::string_view variant_definition(RubricVariant v) {
    switch (v) {
        case RubricVariant::NoDefinition: return prompts::kJudgeNoDefinition;
        case RubricVariant::Construction: return prompts::kJudgeConstruction;
        case RubricVariant::Behavior: return prompts::kJudgeBehavior;
    }
    return prompts::kJudgeNoDefinition;
}

struct Verdict {
    std::string record_id;
    corpus::Label predicted = corpus::Label::Incorrect;
    std::string raw_response;
    RubricVariant variant = RubricVariant::NoDefinition;
    int parse_attempts = 1;
};

/// Renders the judging prompt. Deliberately never receives the expert
/// explanation: the judge must work without a ground-truth answer, and the
/// signature makes leaking one impossible.
inline std::string build_judge_prompt(const corpus::CodeExample& example,
                                      const corpus::ExplanationRecord& record,
                                      RubricVariant variant) {
    if (record.example_id != example.example_id) {
        throw MissingFieldError("record '" + record.record_id + "' does not reference example '" +
                                example.example_id + "'");
    }
    if (!example.has_line(record.line_number)) {
        throw MissingFieldError("record '" + record.record_id + "' references line " +
                                std::to_string(record.line_number) +
                                " which does not exist in example '" + example.example_id + "'");
    }
    auto require = [](std::string_view value, const char* field) {
        if (util::trim(value).empty()) {
            throw MissingFieldError(std::string("judge prompt field '") + field + "' is empty");
        }
    };
    require(example.program_description, "program_description");
    require(record.student_explanation, "student_explanation");
    const std::string& line = example.line_content(record.line_number);
    require(line, "line_content");

    std::string prompt(prompts::kJudgeTemplate);
    prompt = util::replace_all(prompt, "{task}", prompts::kJudgeTask);
    prompt = util::replace_all(prompt, "{definition}", variant_definition(variant));
    prompt = util::replace_all(prompt, "{directive}", prompts::kJudgeDirective);
    prompt = util::replace_all(prompt, "{program_description}", example.program_description);
    prompt = util::replace_all(prompt, "{source_code}", example.joined_source());
    prompt = util::replace_all(prompt, "{line_number}", std::to_string(record.line_number));
    prompt = util::replace_all(prompt, "{student_explanation}", record.student_explanation);
    prompt = util::replace_all(prompt, "{line_content}", line);
    return prompt;
}

namespace detail {

// True when text[pos] starts "correctness" case-insensitively.
inline bool matches_correctness(const std::string& lower, std::size_t pos) {
    static constexpr std::string_view kWord = "correctness";
    return lower.compare(pos, kWord.size(), kWord) == 0;
}

// Reads the 0/1 token directly after a "Correctness" mention. Only separator
// characters may sit between the word and the digit; anything else means this
// mention does not carry the verdict.
inline std::optional<corpus::Label> token_after(const std::string& text, std::size_t from) {
    static constexpr std::string_view kSeparators = ":=*\"'_- \t\r\n";
    for (std::size_t i = from; i < text.size(); ++i) {
        char c = text[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            bool followed_by_digit =
                i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
            if (followed_by_digit) return std::nullopt;
            if (c == '0') return corpus::Label::Incorrect;
            if (c == '1') return corpus::Label::Correct;
            return std::nullopt;
        }
        if (kSeparators.find(c) == std::string_view::npos) return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace detail

/// Extracts the binary verdict. Rule: the last "Correctness" mention followed
/// by a 0/1 token wins; failing that, a lone 0/1 digit is accepted only when
/// it is the single digit in the whole response. Anything else is
/// unparseable — the parser never guesses between conflicting digits.
inline corpus::Label parse_judge_response(const std::string& raw) {
    const std::string lower = util::to_lower(raw);
    static constexpr std::string_view kWord = "correctness";
    std::size_t pos = lower.rfind(kWord);
    while (pos != std::string::npos) {
        if (auto label = detail::token_after(raw, pos + kWord.size())) return *label;
        if (pos == 0) break;
        pos = lower.rfind(kWord, pos - 1);
    }
    std::size_t digit_count = 0;
    char digit = 0;
    for (char c : raw) {
        if (std::isdigit(static_cast<unsigned char>(c))) {
            ++digit_count;
            digit = c;
        }
    }
    if (digit_count == 1 && (digit == '0' || digit == '1')) {
        return digit == '1' ? corpus::Label::Correct : corpus::Label::Incorrect;
    }
    throw UnparseableVerdictError("cannot extract a 0/1 correctness verdict from: " +
                                  raw.substr(0, 200));
}

struct JudgeConfig {
    std::string model_name = "gpt-3.5-turbo-16k";
    double temperature = 0.0;
    int max_tokens = 8;
};

struct AuditEntry {
    std::string record_id;
    std::string prompt_sha256;
    std::string raw_response;
    std::string outcome;  // "correct" | "incorrect" | "unparseable"
    int parse_attempts = 0;
    std::string variant;

    json to_json() const {
        return json{{"record_id", record_id},     {"prompt_sha256", prompt_sha256},
                    {"raw_response", raw_response}, {"outcome", outcome},
                    {"parse_attempts", parse_attempts}, {"variant", variant}};
    }
};

using AuditSink = std::function<void(const AuditEntry&)>;

inline Verdict judge_record(const corpus::CodeExample& example,
                            const corpus::ExplanationRecord& record, RubricVariant variant,
                            providers::ChatProvider& provider, const JudgeConfig& config,
                            const AuditSink& audit = {}) {
    std::string prompt = build_judge_prompt(example, record, variant);
    providers::ChatRequest request;
    request.model_name = config.model_name;
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    request.messages = {{providers::Role::User, prompt}};

    AuditEntry entry;
    entry.record_id = record.record_id;
    entry.prompt_sha256 = util::sha256_hex(prompt);
    entry.variant = variant_name(variant);

    providers::ChatResponse response = provider.complete(request);
    for (int attempt = 1;; ++attempt) {
        entry.parse_attempts = attempt;
        entry.raw_response = response.content;
        try {
            corpus::Label label = parse_judge_response(response.content);
            entry.outcome = corpus::label_name(label);
            if (audit) audit(entry);
            return Verdict{record.record_id, label, response.content, variant, attempt};
        } catch (const UnparseableVerdictError&) {
            if (attempt >= 2) {
                entry.outcome = "unparseable";
                if (audit) audit(entry);
                throw UnparseableVerdictError("record '" + record.record_id +
                                              "': no 0/1 verdict after reprompt; last response: " +
                                              response.content.substr(0, 200));
            }
            providers::ChatRequest retry = request;
            retry.messages[0].content = prompt + "\n\n" + std::string(prompts::kJudgeReprompt);
            entry.prompt_sha256 = util::sha256_hex(retry.messages[0].content);
            response = provider.complete(retry);
        }
    }
}

/// Judges every record, fanning out with bounded parallelism. Verdicts come
/// back in record order regardless of completion order.
inline std::vector<Verdict> judge_records(const corpus::Dataset& dataset, RubricVariant variant,
                                          providers::ChatProvider& provider,
                                          const JudgeConfig& config, std::size_t parallelism = 4,
                                          const AuditSink& audit = {}) {
    std::vector<Verdict> verdicts(dataset.records.size());
    std::vector<AuditEntry> entries(dataset.records.size());
    util::parallel_for(dataset.records.size(), parallelism, [&](std::size_t i) {
        const auto& record = dataset.records[i];
        const auto* example = dataset.find_example(record.example_id);
        if (example == nullptr) {
            throw MissingFieldError("record '" + record.record_id +
                                    "' references unknown example '" + record.example_id + "'");
        }
        AuditSink capture;
        if (audit) capture = [&entries, i](const AuditEntry& e) { entries[i] = e; };
        verdicts[i] = judge_record(*example, record, variant, provider, config, capture);
    });
    if (audit) {
        for (const auto& entry : entries) audit(entry);
    }
    return verdicts;
}

}  // namespace explaingrade::judge
