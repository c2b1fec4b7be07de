#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "explaingrade/corpus.hpp"
#include "explaingrade/errors.hpp"
#include "explaingrade/prompts.hpp"
#include "explaingrade/providers.hpp"
#include "explaingrade/util.hpp"

namespace explaingrade::augment {

using nlohmann::json;

/// One generation call's worth of synthetic negatives: exactly three
/// pairwise-distinct explanations for one code line.
struct NegativeBatch {
    std::string example_id;
    int line_number = 0;
    std::array<std::string, 3> explanations;
    std::string generator_model;
};

inline std::string build_negative_prompt(const corpus::CodeExample& example, int line_number,
                                         const std::vector<std::string>& existing_incorrect,
                                         const std::string& expert_explanation) {
    if (!example.has_line(line_number)) {
        throw MissingFieldError("example '" + example.example_id + "' has no line " +
                                std::to_string(line_number));
    }
    if (util::trim(expert_explanation).empty()) {
        throw MissingFieldError("expert explanation is empty for example '" + example.example_id +
                                "' line " + std::to_string(line_number));
    }
    if (util::trim(example.program_description).empty()) {
        throw MissingFieldError("program description is empty for example '" +
                                example.example_id + "'");
    }
    std::string incorrect_section;
    if (existing_incorrect.empty()) {
        incorrect_section = "(none)";
    } else {
        for (std::size_t i = 0; i < existing_incorrect.size(); ++i) {
            if (i > 0) incorrect_section += "\n";
            incorrect_section += "- " + existing_incorrect[i];
        }
    }
    std::string prompt(prompts::kNegativeTemplate);
    prompt = util::replace_all(prompt, "{program_description}", example.program_description);
    prompt = util::replace_all(prompt, "{source_code}", example.joined_source());
    prompt = util::replace_all(prompt, "{line_number}", std::to_string(line_number));
    prompt = util::replace_all(prompt, "{line_content}", example.line_content(line_number));
    prompt = util::replace_all(prompt, "{incorrect_student_explanations}", incorrect_section);
    prompt = util::replace_all(prompt, "{expert_explanation}", expert_explanation);
    return prompt;
}

struct NegativeContext {
    std::string example_id;
    int line_number = 0;
    std::string generator_model;
    std::string expert_explanation;
    // Normalized forms of every explanation already attached to this line
    // (human student explanations plus accepted synthetic ones).
    std::unordered_set<std::string> existing_normalized;
};

namespace detail {

// Extracts the first balanced JSON object, tolerating prose and code fences
// around it. Braces inside string literals do not count.
inline std::optional<std::string> extract_json_object(const std::string& raw) {
    std::size_t start = raw.find('{');
    while (start != std::string::npos) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < raw.size(); ++i) {
            char c = raw[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                --depth;
                if (depth == 0) {
                    std::string candidate = raw.substr(start, i - start + 1);
                    json parsed = json::parse(candidate, nullptr, false);
                    if (!parsed.is_discarded()) return candidate;
                    break;  // balanced but unparseable; try the next '{'
                }
            }
        }
        start = raw.find('{', start + 1);
    }
    return std::nullopt;
}

}  // namespace detail

/// Validates a generator completion into a NegativeBatch: strict JSON with an
/// incorrectExplanations array of exactly 3 distinct non-empty strings, none
/// colliding with the expert explanation or with explanations already on the
/// line.
inline NegativeBatch parse_negative_response(const std::string& raw,
                                             const NegativeContext& context) {
    auto object_text = detail::extract_json_object(raw);
    if (!object_text) {
        throw NotJsonError("generator response contains no JSON object: " + raw.substr(0, 200));
    }
    json obj = json::parse(*object_text);
    if (!obj.is_object() || !obj.contains("incorrectExplanations") ||
        !obj["incorrectExplanations"].is_array()) {
        throw NotJsonError("generator response lacks an incorrectExplanations array");
    }
    const json& array = obj["incorrectExplanations"];
    if (array.size() != 3) {
        throw WrongArityError("expected 3 incorrect explanations, got " +
                              std::to_string(array.size()));
    }
    NegativeBatch batch;
    batch.example_id = context.example_id;
    batch.line_number = context.line_number;
    batch.generator_model = context.generator_model;

    std::string expert_normalized = util::normalized_text(context.expert_explanation);
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < 3; ++i) {
        if (!array[i].is_string()) {
            throw NotJsonError("incorrectExplanations[" + std::to_string(i) +
                               "] is not a string");
        }
        std::string text = util::trim(array[i].get<std::string>());
        if (text.empty()) {
            throw EmptyExplanationError("incorrectExplanations[" + std::to_string(i) +
                                        "] is empty");
        }
        std::string normalized = util::normalized_text(text);
        if (normalized == expert_normalized) {
            throw CollidesWithExpertError("generated explanation equals the expert explanation: " +
                                          text.substr(0, 120));
        }
        if (!seen.insert(normalized).second) {
            throw DuplicateExplanationError("duplicate explanation within batch: " +
                                            text.substr(0, 120));
        }
        if (context.existing_normalized.count(normalized)) {
            throw DuplicateExplanationError(
                "generated explanation duplicates an existing one for this line: " +
                text.substr(0, 120));
        }
        batch.explanations[i] = std::move(text);
    }
    return batch;
}

struct BalanceConfig {
    std::string generator_model = "gpt-oss-20b";
    double temperature = 0.8;  // generation wants diversity
    int max_tokens = 512;
    int max_attempts_per_line = 10;
    std::size_t parallelism = 4;
};

enum class BalanceTarget { Equalize };

namespace detail {

struct LineSlot {
    std::string example_id;
    int line_number = 0;
    const corpus::CodeExample* example = nullptr;
    std::string expert_explanation;
    std::vector<std::string> prompt_incorrect;  // shown in the prompt, grows as we accept
    std::unordered_set<std::string> existing_normalized;
    std::vector<std::string> accepted;
    int attempts = 0;
    bool exhausted = false;
};

}  // namespace detail

/// Generates synthetic incorrect explanations until the classes are equal.
///
/// Lines are cycled round-robin so negatives spread across the corpus; calls
/// within one wave run in parallel (one in-flight call per line) and results
/// are folded back in line order, so the output never depends on scheduling.
/// Human records pass through untouched; synthetic records get fresh ids
/// disjoint from human ones.
inline corpus::Dataset balance_dataset(const corpus::Dataset& dataset,
                                       providers::ChatProvider& generator,
                                       const BalanceConfig& config = {},
                                       BalanceTarget target = BalanceTarget::Equalize) {
    (void)target;  // Equalize is the only target
    auto [correct, incorrect] = corpus::class_counts(dataset);
    if (correct < incorrect) {
        throw ValidationError(
            "balance_dataset",
            {{0, "invalid-input", "", "dataset has more negatives than positives"}});
    }
    if (correct == incorrect) return dataset;

    // One slot per line that has at least one explanation.
    std::map<std::pair<std::string, int>, detail::LineSlot> slot_map;
    for (const auto& rec : dataset.records) {
        auto key = std::make_pair(rec.example_id, rec.line_number);
        auto [it, inserted] = slot_map.try_emplace(key);
        detail::LineSlot& slot = it->second;
        if (inserted) {
            slot.example_id = rec.example_id;
            slot.line_number = rec.line_number;
            slot.example = dataset.find_example(rec.example_id);
        }
        slot.existing_normalized.insert(util::normalized_text(rec.student_explanation));
        if (rec.label == corpus::Label::Incorrect) {
            slot.prompt_incorrect.push_back(rec.student_explanation);
        }
    }
    // The expert explanation for a line comes from its first record by id.
    {
        std::map<std::pair<std::string, int>, std::pair<std::string, std::string>> first_expert;
        for (const auto& rec : dataset.records) {
            auto key = std::make_pair(rec.example_id, rec.line_number);
            auto it = first_expert.find(key);
            if (it == first_expert.end() || rec.record_id < it->second.first) {
                first_expert[key] = {rec.record_id, rec.expert_explanation};
            }
        }
        for (auto& [key, slot] : slot_map) slot.expert_explanation = first_expert[key].second;
    }

    std::vector<detail::LineSlot*> slots;
    for (auto& [key, slot] : slot_map) slots.push_back(&slot);

    std::size_t deficit = correct - incorrect;
    std::size_t cursor = 0;
    while (deficit > 0) {
        // Pick the next eligible lines, one pending call each.
        std::vector<detail::LineSlot*> wave;
        std::size_t wanted = std::min((deficit + 2) / 3, slots.size());
        for (std::size_t scanned = 0; scanned < slots.size() && wave.size() < wanted; ++scanned) {
            detail::LineSlot* slot = slots[(cursor + scanned) % slots.size()];
            if (!slot->exhausted) wave.push_back(slot);
        }
        cursor = (cursor + wave.size()) % std::max<std::size_t>(slots.size(), 1);
        if (wave.empty()) {
            throw GenerationExhaustedError(
                "cannot reach class balance: every line exhausted its attempt budget with " +
                std::to_string(deficit) + " negative(s) still missing");
        }

        struct WaveResult {
            std::string response;
            std::exception_ptr error;
        };
        std::vector<WaveResult> results(wave.size());
        util::parallel_for(wave.size(), config.parallelism, [&](std::size_t i) {
            detail::LineSlot* slot = wave[i];
            try {
                std::string prompt =
                    build_negative_prompt(*slot->example, slot->line_number,
                                          slot->prompt_incorrect, slot->expert_explanation);
                providers::ChatRequest request;
                request.model_name = config.generator_model;
                request.temperature = config.temperature;
                request.max_tokens = config.max_tokens;
                request.messages = {{providers::Role::User, prompt}};
                results[i].response = generator.complete(request).content;
            } catch (...) {
                results[i].error = std::current_exception();
            }
        });

        // Fold results back in wave order; acceptance is sequential and
        // deterministic.
        for (std::size_t i = 0; i < wave.size() && deficit > 0; ++i) {
            detail::LineSlot* slot = wave[i];
            ++slot->attempts;
            if (results[i].error) {
                try {
                    std::rethrow_exception(results[i].error);
                } catch (const Error& e) {
                    if (e.category() == ErrorCategory::Provider) {
                        throw Error(e.category(), "example '" + slot->example_id + "' line " +
                                                      std::to_string(slot->line_number) + ": " +
                                                      e.what());
                    }
                    // Parse/validation trouble on one line: burn an attempt.
                    if (slot->attempts >= config.max_attempts_per_line) slot->exhausted = true;
                    continue;
                }
            }
            NegativeContext context{slot->example_id, slot->line_number, config.generator_model,
                                    slot->expert_explanation, slot->existing_normalized};
            try {
                NegativeBatch batch = parse_negative_response(results[i].response, context);
                for (const auto& text : batch.explanations) {
                    if (deficit == 0) break;
                    slot->accepted.push_back(text);
                    slot->existing_normalized.insert(util::normalized_text(text));
                    slot->prompt_incorrect.push_back(text);
                    --deficit;
                }
            } catch (const Error& e) {
                if (e.category() != ErrorCategory::ModelOutput) throw;
                if (slot->attempts >= config.max_attempts_per_line) slot->exhausted = true;
            }
        }
    }

    // Deterministic id assignment: slots are already sorted by
    // (example_id, line_number); acceptance order within a line is stable.
    corpus::Dataset out;
    out.examples = dataset.examples;
    out.metadata = dataset.metadata;
    out.filter_history = dataset.filter_history;
    out.records = dataset.records;

    std::unordered_set<std::string> used_ids;
    for (const auto& rec : dataset.records) used_ids.insert(rec.record_id);
    std::size_t added = 0;
    for (const detail::LineSlot* slot : slots) {
        for (std::size_t i = 0; i < slot->accepted.size(); ++i) {
            corpus::ExplanationRecord rec;
            std::string base = "syn-" + slot->example_id + "-L" +
                               std::to_string(slot->line_number) + "-" + std::to_string(i + 1);
            std::string id = base;
            int bump = 1;
            while (used_ids.count(id)) id = base + "-" + std::to_string(++bump);
            used_ids.insert(id);
            rec.record_id = id;
            rec.example_id = slot->example_id;
            rec.line_number = slot->line_number;
            rec.student_explanation = slot->accepted[i];
            rec.expert_explanation = slot->expert_explanation;
            rec.label = corpus::Label::Incorrect;
            rec.provenance = corpus::Provenance::Synthetic;
            out.records.push_back(std::move(rec));
            ++added;
        }
    }
    out.filter_history.push_back("balanced: added " + std::to_string(added) +
                                 " synthetic negative(s)");
    corpus::validate(out);
    return out;
}

// ---- verification sampling ----

struct VerificationSample {
    std::vector<std::string> record_ids;
    std::uint64_t seed = 0;
    std::size_t size = 0;
};

/// Uniform sample of synthetic records without replacement; a pure function
/// of (dataset, n, seed).
inline VerificationSample sample_for_verification(const corpus::Dataset& dataset, std::size_t n,
                                                  std::uint64_t seed) {
    std::vector<std::string> synthetic;
    for (const auto& rec : dataset.records) {
        if (rec.provenance == corpus::Provenance::Synthetic) synthetic.push_back(rec.record_id);
    }
    std::sort(synthetic.begin(), synthetic.end());
    if (synthetic.size() < n) {
        throw InsufficientSyntheticError("requested " + std::to_string(n) +
                                         " synthetic records but dataset has only " +
                                         std::to_string(synthetic.size()));
    }
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first n entries become the sample.
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + static_cast<std::size_t>(
                                util::bounded_draw(rng, synthetic.size() - i));
        std::swap(synthetic[i], synthetic[j]);
    }
    VerificationSample sample;
    sample.record_ids.assign(synthetic.begin(), synthetic.begin() + static_cast<long>(n));
    sample.seed = seed;
    sample.size = n;
    return sample;
}

/// Annotation sheet for human verification: one row per sampled record with a
/// blank judgment column.
inline std::string render_annotation_sheet(const corpus::Dataset& dataset,
                                           const VerificationSample& sample) {
    std::string out = "record_id,program_description,line_content,explanation,judgment\n";
    for (const auto& id : sample.record_ids) {
        const auto* rec = dataset.find_record(id);
        if (rec == nullptr) {
            throw ValidationError("annotation sheet",
                                  {{0, "unknown-record", "record_id",
                                    "sampled record '" + id + "' is not in the dataset"}});
        }
        const auto* example = dataset.find_example(rec->example_id);
        out += util::csv_escape(rec->record_id) + "," +
               util::csv_escape(example ? example->program_description : "") + "," +
               util::csv_escape(example ? example->line_content(rec->line_number) : "") + "," +
               util::csv_escape(rec->student_explanation) + ",\n";
    }
    return out;
}

// ---- score distribution comparison ----

struct GroupStats {
    std::size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
    double fraction_below_0_7 = 0.0;
    std::vector<std::size_t> histogram;  // shared bins of width 0.05

    json to_json() const {
        return json{{"count", count},
                    {"mean", mean},
                    {"median", median},
                    {"fraction_below_0.7", fraction_below_0_7},
                    {"histogram", histogram}};
    }
};

struct DistributionReport {
    double bin_width = 0.05;
    double bin_origin = 0.0;  // left edge of histogram[0]
    GroupStats human_negatives;
    GroupStats synthetic_negatives;
    double ks_statistic = 0.0;
    bool warning = false;  // synthetic mean exceeds human mean by > 0.1

    json to_json() const {
        return json{{"bin_width", bin_width},
                    {"bin_origin", bin_origin},
                    {"human_negatives", human_negatives.to_json()},
                    {"synthetic_negatives", synthetic_negatives.to_json()},
                    {"ks_statistic", ks_statistic},
                    {"warning", warning}};
    }

    std::string render_text() const {
        char buffer[512];
        std::snprintf(buffer, sizeof(buffer),
                      "score distribution (negatives)\n"
                      "  group      count   mean     median   frac<0.7\n"
                      "  human      %-7zu %-8.4f %-8.4f %.4f\n"
                      "  synthetic  %-7zu %-8.4f %-8.4f %.4f\n"
                      "  KS statistic: %.4f\n",
                      human_negatives.count, human_negatives.mean, human_negatives.median,
                      human_negatives.fraction_below_0_7, synthetic_negatives.count,
                      synthetic_negatives.mean, synthetic_negatives.median,
                      synthetic_negatives.fraction_below_0_7, ks_statistic);
        std::string out = buffer;
        if (warning) {
            out += "  warning: synthetic negatives score noticeably higher than human "
                   "negatives (mean gap > 0.1)\n";
        }
        return out;
    }
};

namespace detail {

inline GroupStats group_stats(std::vector<double> values, double origin, std::size_t bins,
                              double width) {
    GroupStats stats;
    stats.count = values.size();
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    std::size_t below = 0;
    stats.histogram.assign(bins, 0);
    for (double v : values) {
        sum += v;
        if (v < 0.7) ++below;
        auto bin = static_cast<std::size_t>(
            std::min(std::max((v - origin) / width, 0.0), static_cast<double>(bins - 1)));
        ++stats.histogram[bin];
    }
    stats.mean = sum / static_cast<double>(values.size());
    std::size_t mid = values.size() / 2;
    stats.median = values.size() % 2 == 1 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
    stats.fraction_below_0_7 = static_cast<double>(below) / static_cast<double>(values.size());
    return stats;
}

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double na = static_cast<double>(a.size());
    double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

}  // namespace detail

/// Side-by-side histogram, first moments, and a two-sample KS statistic for
/// human vs synthetic negative scores. Advisory: reports, never gates.
inline DistributionReport compare_score_distributions(
    const std::vector<double>& scores_human_neg, const std::vector<double>& scores_synth_neg) {
    if (scores_human_neg.empty() || scores_synth_neg.empty()) {
        throw ValidationError("compare_score_distributions",
                              {{0, "empty-input", "", "both score lists must be non-empty"}});
    }
    DistributionReport report;
    double lo = *std::min_element(scores_human_neg.begin(), scores_human_neg.end());
    double hi = *std::max_element(scores_human_neg.begin(), scores_human_neg.end());
    lo = std::min(lo, *std::min_element(scores_synth_neg.begin(), scores_synth_neg.end()));
    hi = std::max(hi, *std::max_element(scores_synth_neg.begin(), scores_synth_neg.end()));
    report.bin_origin = std::floor(lo / report.bin_width) * report.bin_width;
    double top = std::ceil(hi / report.bin_width) * report.bin_width;
    if (top <= report.bin_origin) top = report.bin_origin + report.bin_width;
    auto bins = static_cast<std::size_t>(
        std::ceil((top - report.bin_origin) / report.bin_width - 1e-9));
    report.human_negatives =
        detail::group_stats(scores_human_neg, report.bin_origin, bins, report.bin_width);
    report.synthetic_negatives =
        detail::group_stats(scores_synth_neg, report.bin_origin, bins, report.bin_width);
    report.ks_statistic = detail::ks_statistic(scores_human_neg, scores_synth_neg);
    report.warning = report.synthetic_negatives.mean - report.human_negatives.mean > 0.1;
    return report;
}

}  // namespace explaingrade::augment
