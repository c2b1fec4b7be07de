#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "explaingrade/corpus.hpp"
#include "explaingrade/errors.hpp"
#include "explaingrade/providers.hpp"
#include "explaingrade/util.hpp"

namespace explaingrade::embed {

using nlohmann::json;
using providers::EmbeddingProvider;
using providers::EmbeddingVector;

/// A similarity score attached to one record. Cosine scorers produce values
/// in [-1, 1]; externally computed scorers in [0, 1].
struct ScorePair {
    std::string record_id;
    double score = 0.0;
    std::string scorer_id;

    bool operator==(const ScorePair&) const = default;
};

/// dot(a,b) / (|a|·|b|), computed against per-vector max-magnitude scaling so
/// extreme components cannot overflow, then clamped to [-1, 1].
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        throw DimensionMismatchError("cosine_similarity: dimensions differ (" +
                                     std::to_string(a.dimension()) + " vs " +
                                     std::to_string(b.dimension()) + ")");
    }
    if (a.dimension() == 0) {
        throw ZeroNormVectorError("cosine_similarity: vectors are empty");
    }
    double max_a = 0.0;
    double max_b = 0.0;
    for (double v : a.values) max_a = std::max(max_a, std::fabs(v));
    for (double v : b.values) max_b = std::max(max_b, std::fabs(v));
    if (max_a == 0.0 || max_b == 0.0) {
        throw ZeroNormVectorError("cosine_similarity: zero-norm vector");
    }
    double dot = 0.0;
    double norm_a = 0.0;
    double norm_b = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        double x = a.values[i] / max_a;
        double y = b.values[i] / max_b;
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    double value = dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
    return std::clamp(value, -1.0, 1.0);
}

/// One ScorePair per record: cosine between the student and expert
/// explanation embeddings. Fan-out is bounded; results keep record order.
inline std::vector<ScorePair> score_pairs(const corpus::Dataset& dataset,
                                          EmbeddingProvider& embedder,
                                          std::size_t parallelism = 4) {
    std::vector<ScorePair> out(dataset.records.size());
    util::parallel_for(dataset.records.size(), parallelism, [&](std::size_t i) {
        const auto& record = dataset.records[i];
        try {
            EmbeddingVector student = embedder.embed(record.student_explanation);
            EmbeddingVector expert = embedder.embed(record.expert_explanation);
            out[i] = ScorePair{record.record_id, cosine_similarity(student, expert),
                               embedder.model_name()};
        } catch (const Error& e) {
            throw Error(e.category(),
                        "record '" + record.record_id + "': " + std::string(e.what()));
        }
    });
    return out;
}

struct ExternalScores {
    std::vector<ScorePair> pairs;
    std::vector<std::string> warnings;  // unmatched ids, non-fatal unless strict
};

/// Reads line-delimited {record_id, score} objects produced by an external
/// scorer (e.g. a Deep-Tutor run) and tags them with scorer_id.
inline ExternalScores import_external_scores(const std::filesystem::path& path,
                                             const std::string& scorer_id,
                                             const corpus::Dataset& dataset,
                                             bool strict = false) {
    std::unordered_set<std::string> known;
    known.reserve(dataset.records.size());
    for (const auto& rec : dataset.records) known.insert(rec.record_id);

    ExternalScores out;
    std::string content = util::read_file(path);
    util::for_each_line(content, [&](std::size_t row, const std::string& line) {
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("record_id") ||
            !obj.contains("score") || !obj["score"].is_number()) {
            throw ValidationError("external scores " + path.string(),
                                  {{row, "malformed-score", "",
                                    "expected an object with record_id and numeric score"}});
        }
        std::string record_id = obj["record_id"].get<std::string>();
        double score = obj["score"].get<double>();
        if (!(score >= 0.0 && score <= 1.0)) {
            throw OutOfRangeScoreError("row " + std::to_string(row) + ": score " +
                                       std::to_string(score) + " for record '" + record_id +
                                       "' is outside [0, 1]");
        }
        if (!known.count(record_id)) {
            std::string warning =
                "row " + std::to_string(row) + ": unknown record_id '" + record_id + "'";
            if (strict) throw UnknownRecordIdError(warning);
            out.warnings.push_back(warning);
            return;
        }
        out.pairs.push_back(ScorePair{record_id, score, scorer_id});
    });
    return out;
}

inline json score_pair_to_json(const ScorePair& pair) {
    return json{{"record_id", pair.record_id}, {"score", pair.score},
                {"scorer_id", pair.scorer_id}};
}

inline std::vector<ScorePair> load_score_pairs(const std::filesystem::path& path) {
    std::vector<ScorePair> out;
    std::string content = util::read_file(path);
    util::for_each_line(content, [&](std::size_t row, const std::string& line) {
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.contains("record_id") || !obj.contains("score")) {
            throw ValidationError("score file " + path.string(),
                                  {{row, "malformed-score", "", "invalid score line"}});
        }
        out.push_back(ScorePair{obj["record_id"].get<std::string>(), obj["score"].get<double>(),
                                obj.value("scorer_id", "")});
    });
    return out;
}

inline void save_score_pairs(const std::vector<ScorePair>& pairs,
                             const std::filesystem::path& path) {
    std::string out;
    for (const auto& pair : pairs) {
        out += score_pair_to_json(pair).dump();
        out += "\n";
    }
    util::atomic_write_file(path, out);
}

}  // namespace explaingrade::embed
