#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "explaingrade/errors.hpp"
#include "explaingrade/util.hpp"

namespace explaingrade::corpus {

using nlohmann::json;

enum class Label { Correct, Incorrect };
enum class Provenance { Human, Synthetic };

inline std::string label_name(Label label) {
    return label == Label::Correct ? "correct" : "incorrect";
}

inline std::optional<Label> label_from_name(std::string_view name) {
    if (name == "correct") return Label::Correct;
    if (name == "incorrect") return Label::Incorrect;
    return std::nullopt;
}

inline std::string provenance_name(Provenance p) {
    return p == Provenance::Human ? "human" : "synthetic";
}

inline std::optional<Provenance> provenance_from_name(std::string_view name) {
    if (name == "human") return Provenance::Human;
    if (name == "synthetic") return Provenance::Synthetic;
    return std::nullopt;
}

struct SourceLine {
    int number = 0;  // 1-based, contiguous
    std::string content;

    bool operator==(const SourceLine&) const = default;
};

/// A worked example: the problem statement plus its numbered code lines.
struct CodeExample {
    std::string example_id;
    std::string program_description;
    std::vector<SourceLine> source_lines;
    std::string language_tag;

    bool operator==(const CodeExample&) const = default;

    bool has_line(int number) const {
        return number >= 1 && number <= static_cast<int>(source_lines.size());
    }

    const std::string& line_content(int number) const {
        if (!has_line(number)) {
            throw ValidationError("example " + example_id,
                                  {{0, "invalid-line-number", "line_number",
                                    "line " + std::to_string(number) + " does not exist"}});
        }
        return source_lines[static_cast<std::size_t>(number - 1)].content;
    }

    std::string joined_source() const {
        std::string out;
        for (std::size_t i = 0; i < source_lines.size(); ++i) {
            if (i > 0) out += "\n";
            out += source_lines[i].content;
        }
        return out;
    }
};

/// One (code line, student explanation, expert explanation, label) unit.
struct ExplanationRecord {
    std::string record_id;
    std::string example_id;
    int line_number = 0;
    std::string student_explanation;
    std::string expert_explanation;
    Label label = Label::Correct;
    Provenance provenance = Provenance::Human;

    bool operator==(const ExplanationRecord&) const = default;
};

struct Dataset {
    std::vector<CodeExample> examples;
    std::vector<ExplanationRecord> records;
    std::map<std::string, std::string> metadata;
    std::vector<std::string> filter_history;

    const CodeExample* find_example(std::string_view example_id) const {
        for (const auto& ex : examples) {
            if (ex.example_id == example_id) return &ex;
        }
        return nullptr;
    }

    const ExplanationRecord* find_record(std::string_view record_id) const {
        for (const auto& rec : records) {
            if (rec.record_id == record_id) return &rec;
        }
        return nullptr;
    }
};

inline std::pair<std::size_t, std::size_t> class_counts(const Dataset& dataset) {
    std::size_t correct = 0;
    std::size_t incorrect = 0;
    for (const auto& rec : dataset.records) {
        (rec.label == Label::Correct ? correct : incorrect)++;
    }
    return {correct, incorrect};
}

// ---- sentence segmentation ----
//
// A text counts as a single sentence iff it contains at most one terminal
// punctuation token (. ! ?) and that token, when present, is the last
// character after trimming. Two exclusions: a '.' between digits is a
// decimal point, and punctuation inside a quoted code span (double quotes
// or backticks) is literal code. Single quotes are not span delimiters;
// apostrophes are too common in prose.
inline bool is_single_sentence(std::string_view text) {
    const std::string s = util::trim(text);
    if (s.empty()) return true;
    char quote = 0;
    std::size_t terminal_count = 0;
    std::size_t last_terminal = std::string::npos;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (quote != 0) {
            if (c == quote) quote = 0;
            continue;
        }
        if (c == '"' || c == '`') {
            quote = c;
            continue;
        }
        if (c == '.') {
            bool digit_before = i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]));
            bool digit_after =
                i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]));
            if (digit_before && digit_after) continue;
        }
        if (c == '.' || c == '!' || c == '?') {
            ++terminal_count;
            last_terminal = i;
        }
    }
    if (terminal_count == 0) return true;
    return terminal_count == 1 && last_terminal == s.size() - 1;
}

// ---- validation ----

namespace detail {

inline void validate_dataset(const std::vector<CodeExample>& examples,
                             const std::vector<ExplanationRecord>& records,
                             std::vector<ValidationIssue>& issues,
                             const std::vector<std::size_t>* record_rows = nullptr) {
    std::unordered_map<std::string, const CodeExample*> example_index;
    for (const auto& ex : examples) {
        if (!example_index.emplace(ex.example_id, &ex).second) {
            issues.push_back({0, "duplicate-example-id", "example_id",
                              "example_id '" + ex.example_id + "' appears more than once"});
        }
        if (util::trim(ex.example_id).empty()) {
            issues.push_back({0, "malformed-example", "example_id", "example_id is empty"});
        }
        if (util::trim(ex.program_description).empty()) {
            issues.push_back({0, "malformed-example", "program_description",
                              "example '" + ex.example_id + "' has an empty program description"});
        }
        for (const auto& line : ex.source_lines) {
            if (util::trim(line.content).empty()) {
                issues.push_back({0, "malformed-example", "source_lines",
                                  "example '" + ex.example_id + "' line " +
                                      std::to_string(line.number) + " is empty"});
            }
        }
    }

    std::unordered_set<std::string> seen_ids;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        std::size_t row = record_rows ? (*record_rows)[i] : 0;
        if (util::trim(rec.record_id).empty()) {
            issues.push_back({row, "malformed-record", "record_id", "record_id is empty"});
        } else if (!seen_ids.insert(rec.record_id).second) {
            issues.push_back({row, "duplicate-record-id", "record_id",
                              "record_id '" + rec.record_id + "' appears more than once"});
        }
        if (util::trim(rec.student_explanation).empty()) {
            issues.push_back({row, "malformed-record", "student_explanation",
                              "record '" + rec.record_id + "' has an empty student explanation"});
        }
        if (util::trim(rec.expert_explanation).empty()) {
            issues.push_back({row, "malformed-record", "expert_explanation",
                              "record '" + rec.record_id + "' has an empty expert explanation"});
        }
        if (rec.provenance == Provenance::Synthetic && rec.label != Label::Incorrect) {
            issues.push_back({row, "malformed-record", "label",
                              "synthetic record '" + rec.record_id +
                                  "' must be labeled incorrect"});
        }
        auto it = example_index.find(rec.example_id);
        if (it == example_index.end()) {
            issues.push_back({row, "dangling-example-ref", "example_id",
                              "record '" + rec.record_id + "' references unknown example_id '" +
                                  rec.example_id + "'"});
        } else if (!it->second->has_line(rec.line_number)) {
            issues.push_back({row, "malformed-record", "line_number",
                              "record '" + rec.record_id + "' references line " +
                                  std::to_string(rec.line_number) + " of example '" +
                                  rec.example_id + "' which has " +
                                  std::to_string(it->second->source_lines.size()) + " line(s)"});
        }
    }
}

}  // namespace detail

inline void validate(const Dataset& dataset) {
    std::vector<ValidationIssue> issues;
    detail::validate_dataset(dataset.examples, dataset.records, issues);
    if (!issues.empty()) throw ValidationError("dataset validation failed", issues);
}

// ---- serialization ----

enum class FileFormat { Jsonl, Csv };

inline json record_to_json(const ExplanationRecord& rec) {
    return json{{"record_id", rec.record_id},
                {"example_id", rec.example_id},
                {"line_number", rec.line_number},
                {"student_explanation", rec.student_explanation},
                {"expert_explanation", rec.expert_explanation},
                {"label", label_name(rec.label)},
                {"provenance", provenance_name(rec.provenance)}};
}

inline json example_to_json(const CodeExample& ex) {
    json lines = json::array();
    for (const auto& line : ex.source_lines) lines.push_back(line.content);
    return json{{"example_id", ex.example_id},
                {"program_description", ex.program_description},
                {"source_lines", lines},
                {"language_tag", ex.language_tag}};
}

namespace detail {

inline std::optional<std::string> json_string_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
}

// Returns nullopt and appends an issue when the row cannot be interpreted.
inline std::optional<ExplanationRecord> record_from_json(const json& obj, std::size_t row,
                                                         std::vector<ValidationIssue>& issues) {
    if (!obj.is_object()) {
        issues.push_back({row, "malformed-record", "", "expected a JSON object"});
        return std::nullopt;
    }
    ExplanationRecord rec;
    bool ok = true;
    auto need_string = [&](const char* key, std::string& target) {
        auto value = json_string_field(obj, key);
        if (!value) {
            issues.push_back({row, "malformed-record", key, "missing or non-string field"});
            ok = false;
            return;
        }
        target = *value;
    };
    need_string("record_id", rec.record_id);
    need_string("example_id", rec.example_id);

    auto ln = obj.find("line_number");
    if (ln == obj.end() || !ln->is_number_integer()) {
        issues.push_back({row, "malformed-record", "line_number", "missing or non-integer field"});
        ok = false;
    } else {
        rec.line_number = ln->get<int>();
    }

    std::string student;
    std::string expert;
    need_string("student_explanation", student);
    need_string("expert_explanation", expert);
    rec.student_explanation = util::trim(student);
    rec.expert_explanation = util::trim(expert);

    auto label_text = json_string_field(obj, "label");
    auto label = label_text ? label_from_name(*label_text) : std::nullopt;
    if (!label) {
        issues.push_back({row, "malformed-record", "label",
                          "label must be \"correct\" or \"incorrect\""});
        ok = false;
    } else {
        rec.label = *label;
    }

    auto prov_text = json_string_field(obj, "provenance");
    auto prov = prov_text ? provenance_from_name(*prov_text) : std::nullopt;
    if (!prov) {
        issues.push_back({row, "malformed-record", "provenance",
                          "provenance must be \"human\" or \"synthetic\""});
        ok = false;
    } else {
        rec.provenance = *prov;
    }
    if (!ok) return std::nullopt;
    return rec;
}

inline std::optional<CodeExample> example_from_json(const json& obj, std::size_t row,
                                                    std::vector<ValidationIssue>& issues) {
    if (!obj.is_object()) {
        issues.push_back({row, "malformed-example", "", "expected a JSON object"});
        return std::nullopt;
    }
    CodeExample ex;
    auto id = json_string_field(obj, "example_id");
    auto desc = json_string_field(obj, "program_description");
    if (!id || !desc) {
        issues.push_back({row, "malformed-example", !id ? "example_id" : "program_description",
                          "missing or non-string field"});
        return std::nullopt;
    }
    ex.example_id = *id;
    ex.program_description = util::trim(*desc);
    ex.language_tag = json_string_field(obj, "language_tag").value_or("");

    auto lines = obj.find("source_lines");
    if (lines == obj.end() || !lines->is_array()) {
        issues.push_back({row, "malformed-example", "source_lines", "missing or non-array field"});
        return std::nullopt;
    }
    int number = 1;
    for (const auto& entry : *lines) {
        if (!entry.is_string()) {
            issues.push_back({row, "malformed-example", "source_lines",
                              "source line " + std::to_string(number) + " is not a string"});
            return std::nullopt;
        }
        std::string content = entry.get<std::string>();
        while (!content.empty() && (content.back() == '\r' || content.back() == '\n')) {
            content.pop_back();
        }
        ex.source_lines.push_back({number++, content});
    }
    return ex;
}

inline const std::vector<std::string>& record_csv_columns() {
    static const std::vector<std::string> columns = {
        "record_id",          "example_id",         "line_number", "student_explanation",
        "expert_explanation", "label",              "provenance"};
    return columns;
}

inline std::vector<ExplanationRecord> records_from_csv(const std::string& content,
                                                       std::vector<std::size_t>& rows,
                                                       std::vector<ValidationIssue>& issues) {
    std::vector<ExplanationRecord> records;
    auto table = util::parse_csv(content);
    if (table.empty()) return records;
    const auto& columns = record_csv_columns();
    std::unordered_map<std::string, std::size_t> column_index;
    for (std::size_t i = 0; i < table[0].size(); ++i) {
        column_index[util::trim(table[0][i])] = i;
    }
    for (const auto& name : columns) {
        if (!column_index.count(name)) {
            issues.push_back({1, "malformed-record", name, "missing CSV column"});
        }
    }
    if (!issues.empty()) return records;
    for (std::size_t r = 1; r < table.size(); ++r) {
        const auto& row = table[r];
        std::size_t row_no = r + 1;
        auto cell = [&](const std::string& name) -> std::string {
            std::size_t idx = column_index.at(name);
            return idx < row.size() ? row[idx] : "";
        };
        json obj = {{"record_id", cell("record_id")},
                    {"example_id", cell("example_id")},
                    {"student_explanation", cell("student_explanation")},
                    {"expert_explanation", cell("expert_explanation")},
                    {"label", util::to_lower(util::trim(cell("label")))},
                    {"provenance", util::to_lower(util::trim(cell("provenance")))}};
        std::string line_no_text = util::trim(cell("line_number"));
        try {
            std::size_t used = 0;
            int value = std::stoi(line_no_text, &used);
            if (used != line_no_text.size()) throw std::invalid_argument(line_no_text);
            obj["line_number"] = value;
        } catch (const std::exception&) {
            issues.push_back({row_no, "malformed-record", "line_number",
                              "'" + line_no_text + "' is not an integer"});
            continue;
        }
        if (auto rec = record_from_json(obj, row_no, issues)) {
            records.push_back(std::move(*rec));
            rows.push_back(row_no);
        }
    }
    return records;
}

struct ResolvedPaths {
    std::filesystem::path records;
    std::filesystem::path examples;
};

inline ResolvedPaths resolve_dataset_paths(const std::filesystem::path& path, FileFormat format) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        fs::path records = path / (format == FileFormat::Csv ? "records.csv" : "records.jsonl");
        return {records, path / "examples.jsonl"};
    }
    std::string name = path.filename().string();
    std::size_t pos = name.find("records");
    if (pos == std::string::npos) {
        throw ValidationError(
            "cannot locate examples file for " + path.string(),
            {{0, "io", "", "record file name must contain 'records', or pass a directory"}});
    }
    std::string examples_name = name;
    examples_name.replace(pos, std::string("records").size(), "examples");
    fs::path examples = path.parent_path() / examples_name;
    if (examples.extension() != ".jsonl") examples.replace_extension(".jsonl");
    return {path, examples};
}

}  // namespace detail

/// Loads and validates a dataset. Collects every problem before failing so a
/// broken corpus surfaces as one complete report.
inline Dataset load_dataset(const std::filesystem::path& path, FileFormat format = FileFormat::Jsonl) {
    namespace fs = std::filesystem;
    auto paths = detail::resolve_dataset_paths(path, format);
    if (!fs::exists(paths.records)) {
        throw ValidationError("cannot open " + paths.records.string(),
                              {{0, "io", "", "records file does not exist"}});
    }

    Dataset dataset;
    std::vector<ValidationIssue> issues;
    std::vector<std::size_t> record_rows;

    if (fs::exists(paths.examples)) {
        std::string content = util::read_file(paths.examples);
        util::for_each_line(content, [&](std::size_t row, const std::string& line) {
            json obj = json::parse(line, nullptr, false);
            if (obj.is_discarded()) {
                issues.push_back({row, "malformed-example", "", "invalid JSON"});
                return;
            }
            if (auto ex = detail::example_from_json(obj, row, issues)) {
                dataset.examples.push_back(std::move(*ex));
            }
        });
    }

    std::string record_content = util::read_file(paths.records);
    if (format == FileFormat::Csv) {
        dataset.records = detail::records_from_csv(record_content, record_rows, issues);
    } else {
        util::for_each_line(record_content, [&](std::size_t row, const std::string& line) {
            json obj = json::parse(line, nullptr, false);
            if (obj.is_discarded()) {
                issues.push_back({row, "malformed-record", "", "invalid JSON"});
                return;
            }
            if (auto rec = detail::record_from_json(obj, row, issues)) {
                dataset.records.push_back(std::move(*rec));
                record_rows.push_back(row);
            }
        });
    }

    detail::validate_dataset(dataset.examples, dataset.records, issues, &record_rows);
    if (!issues.empty()) {
        throw ValidationError("failed to load dataset from " + paths.records.string(), issues);
    }

    auto [correct, incorrect] = class_counts(dataset);
    dataset.metadata["source"] = path.string();
    dataset.metadata["format"] = format == FileFormat::Csv ? "csv" : "jsonl";
    dataset.metadata["record_count"] = std::to_string(dataset.records.size());
    dataset.metadata["correct_count"] = std::to_string(correct);
    dataset.metadata["incorrect_count"] = std::to_string(incorrect);
    return dataset;
}

/// Writes the canonical line-delimited corpus (records.jsonl + examples.jsonl).
inline void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string examples_out;
    for (const auto& ex : dataset.examples) {
        examples_out += example_to_json(ex).dump();
        examples_out += "\n";
    }
    std::string records_out;
    for (const auto& rec : dataset.records) {
        records_out += record_to_json(rec).dump();
        records_out += "\n";
    }
    util::atomic_write_file(dir / "examples.jsonl", examples_out);
    util::atomic_write_file(dir / "records.jsonl", records_out);
}

/// Keeps only records where both explanations are single sentences under
/// is_single_sentence. Examples are kept untouched.
inline Dataset filter_single_statement(const Dataset& dataset) {
    Dataset out;
    out.examples = dataset.examples;
    out.metadata = dataset.metadata;
    out.filter_history = dataset.filter_history;
    out.records.reserve(dataset.records.size());
    for (const auto& rec : dataset.records) {
        if (is_single_sentence(rec.student_explanation) &&
            is_single_sentence(rec.expert_explanation)) {
            out.records.push_back(rec);
        }
    }
    out.filter_history.push_back("single-statement: kept " + std::to_string(out.records.size()) +
                                 " of " + std::to_string(dataset.records.size()) + " records");
    return out;
}

}  // namespace explaingrade::corpus
