#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "explaingrade/corpus.hpp"
#include "explaingrade/errors.hpp"

namespace explaingrade::classify {

using nlohmann::json;

struct ScoredLabel {
    double score = 0.0;
    corpus::Label label = corpus::Label::Incorrect;
};

/// A calibrated decision rule: score >= threshold predicts Correct.
struct ThresholdModel {
    double threshold = 0.0;
    std::string scorer_id;
    double training_f1 = 0.0;
    std::size_t calibration_size = 0;

    json to_json() const {
        return json{{"threshold", threshold},
                    {"scorer_id", scorer_id},
                    {"training_f1", training_f1},
                    {"calibration_size", calibration_size}};
    }

    static ThresholdModel from_json(const json& obj) {
        ThresholdModel model;
        model.threshold = obj.at("threshold").get<double>();
        model.scorer_id = obj.value("scorer_id", "");
        model.training_f1 = obj.value("training_f1", 0.0);
        model.calibration_size = obj.value("calibration_size", std::size_t{0});
        return model;
    }
};

inline corpus::Label classify(double score, const ThresholdModel& model) {
    return score >= model.threshold ? corpus::Label::Correct : corpus::Label::Incorrect;
}

/// Exact F1-optimal threshold search.
///
/// Candidate thresholds are the midpoints between consecutive distinct scores
/// plus a below-min and an above-max sentinel; between two data points every
/// threshold induces the same split, so checking midpoints is exhaustive.
/// Implemented as a single high-to-low sweep that folds each score group into
/// running TP/FP counts. Ties prefer the smallest threshold (most inclusive
/// split: highest recall at equal F1).
inline ThresholdModel find_optimal_threshold(std::span<const ScoredLabel> samples,
                                             std::string scorer_id = "") {
    if (samples.empty()) {
        throw ValidationError("find_optimal_threshold",
                              {{0, "empty-calibration", "", "calibration set is empty"}});
    }
    std::size_t total_positives = 0;
    for (const auto& s : samples) {
        if (s.label == corpus::Label::Correct) ++total_positives;
    }
    if (total_positives == 0) {
        throw NoPositivesError("calibration set has no positive labels; F1 is undefined");
    }

    std::vector<ScoredLabel> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });

    auto f1_of = [&](std::size_t tp, std::size_t fp) {
        std::size_t fn = total_positives - tp;
        double precision = tp + fp == 0 ? 0.0
                                        : static_cast<double>(tp) / static_cast<double>(tp + fp);
        double recall = tp + fn == 0 ? 0.0
                                     : static_cast<double>(tp) / static_cast<double>(tp + fn);
        return precision + recall == 0.0 ? 0.0
                                         : 2.0 * precision * recall / (precision + recall);
    };

    // Above-max sentinel: nothing predicted Correct.
    double best_threshold = sorted.front().score + 1.0;
    double best_f1 = f1_of(0, 0);

    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        double group_score = sorted[i].score;
        while (i < sorted.size() && sorted[i].score == group_score) {
            (sorted[i].label == corpus::Label::Correct ? tp : fp)++;
            ++i;
        }
        // Below-min sentinel: the lowest finite double, so the rule
        // "score >= t" accepts every finite score.
        double candidate = i < sorted.size() ? (group_score + sorted[i].score) / 2.0
                                             : std::numeric_limits<double>::lowest();
        double f1 = f1_of(tp, fp);
        if (f1 >= best_f1) {  // >= so equal F1 keeps the smaller (later) threshold
            best_f1 = f1;
            best_threshold = candidate;
        }
    }

    ThresholdModel model;
    model.threshold = best_threshold;
    model.scorer_id = std::move(scorer_id);
    model.training_f1 = best_f1;
    model.calibration_size = samples.size();
    return model;
}

}  // namespace explaingrade::classify
