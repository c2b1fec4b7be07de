#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "explaingrade/classify.hpp"
#include "explaingrade/corpus.hpp"
#include "explaingrade/errors.hpp"
#include "explaingrade/util.hpp"

namespace explaingrade::eval {

using nlohmann::json;

// ---- confusion counts & metrics ----

/// Positive class is Correct.
struct ConfusionMatrix {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;

    bool operator==(const ConfusionMatrix&) const = default;

    long long total() const { return tp + fp + fn + tn; }

    ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
        tp += other.tp;
        fp += other.fp;
        fn += other.fn;
        tn += other.tn;
        return *this;
    }

    json to_json() const { return json{{"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn}}; }

    static ConfusionMatrix from_json(const json& obj) {
        return ConfusionMatrix{obj.at("tp").get<long long>(), obj.at("fp").get<long long>(),
                               obj.at("fn").get<long long>(), obj.at("tn").get<long long>()};
    }
};

inline ConfusionMatrix confusion(
    const std::vector<std::pair<std::string, corpus::Label>>& predictions,
    const std::vector<std::pair<std::string, corpus::Label>>& truth) {
    if (predictions.size() != truth.size()) {
        throw IdSetMismatchError("predictions have " + std::to_string(predictions.size()) +
                                 " ids but truth has " + std::to_string(truth.size()));
    }
    std::unordered_map<std::string, corpus::Label> truth_by_id;
    truth_by_id.reserve(truth.size());
    for (const auto& [id, label] : truth) {
        if (!truth_by_id.emplace(id, label).second) {
            throw IdSetMismatchError("duplicate record_id '" + id + "' in truth");
        }
    }
    ConfusionMatrix cm;
    for (const auto& [id, predicted] : predictions) {
        auto it = truth_by_id.find(id);
        if (it == truth_by_id.end()) {
            throw IdSetMismatchError("prediction for unknown record_id '" + id + "'");
        }
        bool actual_pos = it->second == corpus::Label::Correct;
        bool predicted_pos = predicted == corpus::Label::Correct;
        if (predicted_pos && actual_pos) ++cm.tp;
        else if (predicted_pos && !actual_pos) ++cm.fp;
        else if (!predicted_pos && actual_pos) ++cm.fn;
        else ++cm.tn;
        truth_by_id.erase(it);  // each id may be predicted once
    }
    if (!truth_by_id.empty()) {
        throw IdSetMismatchError("missing predictions for " +
                                 std::to_string(truth_by_id.size()) + " record(s)");
    }
    return cm;
}

struct MetricsRow {
    std::string scorer_id;
    std::string scope;  // "fold-1".."fold-k" or "aggregate"
    double f1 = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;

    json to_json() const {
        return json{{"scorer_id", scorer_id}, {"scope", scope},       {"f1", f1},
                    {"accuracy", accuracy},   {"precision", precision}, {"recall", recall}};
    }

    static MetricsRow from_json(const json& obj) {
        MetricsRow row;
        row.scorer_id = obj.value("scorer_id", "");
        row.scope = obj.value("scope", "");
        row.f1 = obj.at("f1").get<double>();
        row.accuracy = obj.at("accuracy").get<double>();
        row.precision = obj.at("precision").get<double>();
        row.recall = obj.at("recall").get<double>();
        return row;
    }
};

/// precision = tp/(tp+fp), recall = tp/(tp+fn), f1 = 2PR/(P+R), accuracy =
/// (tp+tn)/total; each 0 when its denominator is 0.
inline MetricsRow metrics(const ConfusionMatrix& cm, std::string scorer_id = "",
                          std::string scope = "") {
    if (cm.total() == 0) throw EmptyMatrixError("confusion matrix has no counts");
    MetricsRow row;
    row.scorer_id = std::move(scorer_id);
    row.scope = std::move(scope);
    double tp = static_cast<double>(cm.tp);
    row.precision = cm.tp + cm.fp == 0 ? 0.0 : tp / static_cast<double>(cm.tp + cm.fp);
    row.recall = cm.tp + cm.fn == 0 ? 0.0 : tp / static_cast<double>(cm.tp + cm.fn);
    row.f1 = row.precision + row.recall == 0.0
                 ? 0.0
                 : 2.0 * row.precision * row.recall / (row.precision + row.recall);
    row.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    return row;
}

enum class AggregateMode { Micro, Macro };

inline std::string aggregate_mode_name(AggregateMode mode) {
    return mode == AggregateMode::Micro ? "micro" : "macro";
}

/// micro: metrics over pooled counts. macro: unweighted mean of per-fold
/// metrics.
inline MetricsRow aggregate(const std::vector<ConfusionMatrix>& per_fold, AggregateMode mode,
                            std::string scorer_id = "") {
    if (per_fold.empty()) {
        throw ValidationError("aggregate", {{0, "empty-input", "", "no fold matrices"}});
    }
    if (mode == AggregateMode::Micro) {
        ConfusionMatrix pooled;
        for (const auto& cm : per_fold) pooled += cm;
        return metrics(pooled, std::move(scorer_id), "aggregate");
    }
    MetricsRow row;
    row.scorer_id = std::move(scorer_id);
    row.scope = "aggregate";
    for (const auto& cm : per_fold) {
        MetricsRow fold = metrics(cm);
        row.f1 += fold.f1;
        row.accuracy += fold.accuracy;
        row.precision += fold.precision;
        row.recall += fold.recall;
    }
    double n = static_cast<double>(per_fold.size());
    row.f1 /= n;
    row.accuracy /= n;
    row.precision /= n;
    row.recall /= n;
    return row;
}

// ---- stratified k-fold ----

struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::unordered_map<std::string, int> assignment;  // record_id -> fold index

    int fold_of(const std::string& record_id) const {
        auto it = assignment.find(record_id);
        if (it == assignment.end()) {
            throw IdSetMismatchError("record '" + record_id + "' is not in the fold plan");
        }
        return it->second;
    }

    json to_json() const {
        json assign = json::object();
        for (const auto& [id, fold] : assignment) assign[id] = fold;
        return json{{"k", k}, {"seed", seed}, {"assignment", assign}};
    }

    static FoldPlan from_json(const json& obj) {
        FoldPlan plan;
        plan.k = obj.at("k").get<int>();
        plan.seed = obj.at("seed").get<std::uint64_t>();
        for (const auto& [id, fold] : obj.at("assignment").items()) {
            plan.assignment[id] = fold.get<int>();
        }
        return plan;
    }
};

/// Deterministic stratified assignment. Each class is shuffled with the seed
/// and dealt into folds whose per-class quotas differ by at most one. The
/// folds carrying each class's remainder rotate between classes, so overall
/// fold sizes are non-increasing: the larger folds come first.
inline FoldPlan stratified_kfold(const corpus::Dataset& dataset, int k, std::uint64_t seed) {
    if (k < 2) {
        throw ValidationError("stratified_kfold",
                              {{0, "invalid-k", "k", "k must be at least 2"}});
    }
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    for (const auto& rec : dataset.records) {
        (rec.label == corpus::Label::Correct ? positives : negatives).push_back(rec.record_id);
    }
    for (const auto* cls : {&positives, &negatives}) {
        if (cls->size() < static_cast<std::size_t>(k)) {
            throw ClassTooSmallError("class with " + std::to_string(cls->size()) +
                                     " record(s) cannot be split into " + std::to_string(k) +
                                     " folds");
        }
    }

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    std::mt19937_64 rng(seed);
    int offset = 0;
    for (auto* cls : {&positives, &negatives}) {
        std::sort(cls->begin(), cls->end());  // independent of input order
        // Fisher-Yates with portable draws; std::shuffle is
        // implementation-defined.
        for (std::size_t i = cls->size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(util::bounded_draw(rng, i));
            std::swap((*cls)[i - 1], (*cls)[j]);
        }
        std::size_t base = cls->size() / static_cast<std::size_t>(k);
        int remainder = static_cast<int>(cls->size() % static_cast<std::size_t>(k));
        std::size_t cursor = 0;
        for (int fold = 0; fold < k; ++fold) {
            bool extra = ((fold - offset) % k + k) % k < remainder;
            std::size_t quota = base + (extra ? 1 : 0);
            for (std::size_t j = 0; j < quota; ++j) {
                plan.assignment[(*cls)[cursor++]] = fold;
            }
        }
        offset = (offset + remainder) % k;
    }
    return plan;
}

inline std::vector<const corpus::ExplanationRecord*> test_records(const corpus::Dataset& dataset,
                                                                  const FoldPlan& plan,
                                                                  int fold) {
    std::vector<const corpus::ExplanationRecord*> out;
    for (const auto& rec : dataset.records) {
        if (plan.fold_of(rec.record_id) == fold) out.push_back(&rec);
    }
    return out;
}

inline std::vector<const corpus::ExplanationRecord*> train_records(const corpus::Dataset& dataset,
                                                                   const FoldPlan& plan,
                                                                   int fold) {
    std::vector<const corpus::ExplanationRecord*> out;
    for (const auto& rec : dataset.records) {
        if (plan.fold_of(rec.record_id) != fold) out.push_back(&rec);
    }
    return out;
}

// ---- experiment runner ----

struct SimilarityScorer {
    std::string id;
    std::unordered_map<std::string, double> scores;  // record_id -> score
};

/// Zero-shot scorer: consulted for test records only, never calibrated.
struct JudgeScorer {
    std::string id;
    std::function<corpus::Label(const corpus::ExplanationRecord&)> predict;
};

using ScorerSpec = std::variant<SimilarityScorer, JudgeScorer>;

struct FoldOutcome {
    ConfusionMatrix cm;
    std::optional<classify::ThresholdModel> threshold;  // similarity scorers only
    std::vector<std::pair<std::string, corpus::Label>> predictions;
    MetricsRow fold_metrics;
};

struct ScorerResult {
    std::string id;
    std::string kind;  // "similarity" | "judge"
    std::vector<FoldOutcome> folds;
    MetricsRow aggregate_row;
};

struct ExperimentResult {
    int k = 0;
    std::uint64_t seed = 0;
    AggregateMode mode = AggregateMode::Micro;
    FoldPlan plan;
    std::vector<ScorerResult> scorers;
    json provenance;  // seed, cache digest, config snapshot

    json to_json() const {
        json scorer_list = json::array();
        for (const auto& s : scorers) {
            json folds = json::array();
            for (std::size_t f = 0; f < s.folds.size(); ++f) {
                json fold = {{"fold", f + 1},
                             {"confusion", s.folds[f].cm.to_json()},
                             {"metrics", s.folds[f].fold_metrics.to_json()}};
                if (s.folds[f].threshold) fold["threshold"] = s.folds[f].threshold->to_json();
                json preds = json::array();
                for (const auto& [id, label] : s.folds[f].predictions) {
                    preds.push_back({{"record_id", id}, {"predicted", corpus::label_name(label)}});
                }
                fold["predictions"] = preds;
                folds.push_back(fold);
            }
            scorer_list.push_back({{"scorer_id", s.id},
                                   {"kind", s.kind},
                                   {"folds", folds},
                                   {"aggregate", s.aggregate_row.to_json()}});
        }
        return json{{"k", k},
                    {"seed", seed},
                    {"aggregate_mode", aggregate_mode_name(mode)},
                    {"fold_plan", plan.to_json()},
                    {"scorers", scorer_list},
                    {"provenance", provenance}};
    }

    static ExperimentResult from_json(const json& obj) {
        ExperimentResult result;
        result.k = obj.at("k").get<int>();
        result.seed = obj.at("seed").get<std::uint64_t>();
        result.mode = obj.value("aggregate_mode", "micro") == "macro" ? AggregateMode::Macro
                                                                      : AggregateMode::Micro;
        result.plan = FoldPlan::from_json(obj.at("fold_plan"));
        result.provenance = obj.value("provenance", json::object());
        for (const auto& s : obj.at("scorers")) {
            ScorerResult scorer;
            scorer.id = s.at("scorer_id").get<std::string>();
            scorer.kind = s.value("kind", "");
            scorer.aggregate_row = MetricsRow::from_json(s.at("aggregate"));
            for (const auto& f : s.at("folds")) {
                FoldOutcome outcome;
                outcome.cm = ConfusionMatrix::from_json(f.at("confusion"));
                outcome.fold_metrics = MetricsRow::from_json(f.at("metrics"));
                if (f.contains("threshold")) {
                    outcome.threshold = classify::ThresholdModel::from_json(f.at("threshold"));
                }
                for (const auto& p : f.value("predictions", json::array())) {
                    outcome.predictions.emplace_back(
                        p.at("record_id").get<std::string>(),
                        corpus::label_from_name(p.at("predicted").get<std::string>())
                            .value_or(corpus::Label::Incorrect));
                }
                scorer.folds.push_back(std::move(outcome));
            }
            result.scorers.push_back(std::move(scorer));
        }
        return result;
    }
};

struct ExperimentConfig {
    AggregateMode mode = AggregateMode::Micro;
    json provenance = json::object();
};

/// Per fold: similarity scorers calibrate a threshold on the training split
/// and predict the test split; judge scorers predict the test split only —
/// this code path never hands them a training record.
inline ExperimentResult run_experiment(const corpus::Dataset& dataset, const FoldPlan& plan,
                                       const std::vector<ScorerSpec>& scorers,
                                       const ExperimentConfig& config = {}) {
    ExperimentResult result;
    result.k = plan.k;
    result.seed = plan.seed;
    result.mode = config.mode;
    result.plan = plan;
    result.provenance = config.provenance;
    result.provenance["k"] = plan.k;
    result.provenance["seed"] = plan.seed;

    for (const auto& spec : scorers) {
        ScorerResult scorer_result;
        std::vector<ConfusionMatrix> fold_matrices;
        for (int fold = 0; fold < plan.k; ++fold) {
            auto test = test_records(dataset, plan, fold);
            FoldOutcome outcome;
            std::vector<std::pair<std::string, corpus::Label>> truth;
            truth.reserve(test.size());
            for (const auto* rec : test) truth.emplace_back(rec->record_id, rec->label);

            if (const auto* sim = std::get_if<SimilarityScorer>(&spec)) {
                scorer_result.id = sim->id;
                scorer_result.kind = "similarity";
                auto train = train_records(dataset, plan, fold);
                std::vector<classify::ScoredLabel> calibration;
                calibration.reserve(train.size());
                auto score_of = [&](const corpus::ExplanationRecord& rec) {
                    auto it = sim->scores.find(rec.record_id);
                    if (it == sim->scores.end()) {
                        throw ValidationError(
                            "scorer '" + sim->id + "' fold " + std::to_string(fold + 1),
                            {{0, "missing-score", "record_id",
                              "no score for record '" + rec.record_id + "'"}});
                    }
                    return it->second;
                };
                for (const auto* rec : train) {
                    calibration.push_back({score_of(*rec), rec->label});
                }
                outcome.threshold = classify::find_optimal_threshold(calibration, sim->id);
                for (const auto* rec : test) {
                    outcome.predictions.emplace_back(
                        rec->record_id, classify::classify(score_of(*rec), *outcome.threshold));
                }
            } else {
                const auto& judge_scorer = std::get<JudgeScorer>(spec);
                scorer_result.id = judge_scorer.id;
                scorer_result.kind = "judge";
                for (const auto* rec : test) {
                    outcome.predictions.emplace_back(rec->record_id, judge_scorer.predict(*rec));
                }
            }

            outcome.cm = confusion(outcome.predictions, truth);
            outcome.fold_metrics =
                metrics(outcome.cm, scorer_result.id, "fold-" + std::to_string(fold + 1));
            fold_matrices.push_back(outcome.cm);
            scorer_result.folds.push_back(std::move(outcome));
        }
        scorer_result.aggregate_row = aggregate(fold_matrices, config.mode, scorer_result.id);
        result.scorers.push_back(std::move(scorer_result));
    }
    return result;
}

// ---- report rendering ----

enum class ReportFormat { TextTable, Csv, Machine };

inline std::optional<ReportFormat> report_format_from_name(std::string_view name) {
    if (name == "text-table" || name == "text") return ReportFormat::TextTable;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "machine" || name == "json") return ReportFormat::Machine;
    return std::nullopt;
}

/// Two decimals; a trailing zero drops to one decimal (0.70 -> "0.7").
inline std::string format_metric(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.2f", value);
    std::string out = buffer;
    if (!out.empty() && out.back() == '0' && out.find('.') != std::string::npos) out.pop_back();
    return out;
}

inline std::string render_report(const ExperimentResult& result, ReportFormat format) {
    if (format == ReportFormat::Machine) {
        return result.to_json().dump(2) + "\n";
    }
    if (format == ReportFormat::Csv) {
        std::string out =
            "scorer_id,scope,tp,fp,fn,tn,precision,recall,f1,accuracy,threshold\n";
        auto add_row = [&out](const std::string& id, const std::string& scope,
                              const ConfusionMatrix* cm, const MetricsRow& row,
                              const std::optional<classify::ThresholdModel>& threshold) {
            char buffer[256];
            std::string counts = cm ? std::to_string(cm->tp) + "," + std::to_string(cm->fp) +
                                          "," + std::to_string(cm->fn) + "," +
                                          std::to_string(cm->tn)
                                    : ",,,";
            std::snprintf(buffer, sizeof(buffer), "%.10g,%.10g,%.10g,%.10g", row.precision,
                          row.recall, row.f1, row.accuracy);
            out += util::csv_escape(id) + "," + scope + "," + counts + "," + buffer;
            out += ",";
            if (threshold) {
                char tbuf[64];
                std::snprintf(tbuf, sizeof(tbuf), "%.10g", threshold->threshold);
                out += tbuf;
            }
            out += "\n";
        };
        for (const auto& scorer : result.scorers) {
            for (std::size_t f = 0; f < scorer.folds.size(); ++f) {
                const auto& fold = scorer.folds[f];
                add_row(scorer.id, "fold-" + std::to_string(f + 1), &fold.cm, fold.fold_metrics,
                        fold.threshold);
            }
            ConfusionMatrix pooled;
            for (const auto& fold : scorer.folds) pooled += fold.cm;
            add_row(scorer.id, "aggregate", &pooled, scorer.aggregate_row, std::nullopt);
        }
        return out;
    }

    // text-table: summary (scorer x F1/Acc.) then the per-fold counts
    std::size_t width = 5;
    for (const auto& scorer : result.scorers) width = std::max(width, scorer.id.size());
    std::string out = "Model";
    out += std::string(width - 5 + 2, ' ');
    out += "F1     Acc.\n";
    for (const auto& scorer : result.scorers) {
        out += scorer.id;
        out += std::string(width - scorer.id.size() + 2, ' ');
        std::string f1 = format_metric(scorer.aggregate_row.f1);
        out += f1 + std::string(f1.size() < 7 ? 7 - f1.size() : 1, ' ');
        out += format_metric(scorer.aggregate_row.accuracy);
        out += "\n";
    }
    out += "\nPer-fold confusion counts (positive class = correct)\n";
    int folds = result.scorers.empty() ? 0 : static_cast<int>(result.scorers[0].folds.size());
    for (int f = 0; f < folds; ++f) {
        out += "Fold " + std::to_string(f + 1) + "\n";
        out += "  ";
        out += "scorer";
        out += std::string(width > 6 ? width - 6 + 2 : 2, ' ');
        out += "TP    FP    FN    TN\n";
        for (const auto& scorer : result.scorers) {
            if (f >= static_cast<int>(scorer.folds.size())) continue;
            const auto& cm = scorer.folds[static_cast<std::size_t>(f)].cm;
            char buffer[96];
            std::snprintf(buffer, sizeof(buffer), "%-5lld %-5lld %-5lld %-5lld", cm.tp, cm.fp,
                          cm.fn, cm.tn);
            out += "  " + scorer.id + std::string(width - scorer.id.size() + 2, ' ') + buffer +
                   "\n";
        }
    }
    return out;
}

}  // namespace explaingrade::eval
