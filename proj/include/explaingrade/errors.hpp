#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace explaingrade {

// Category decides the process exit code when an error escapes the CLI:
// 1 = bad input / broken invariant, 2 = endpoint or transport trouble,
// 3 = a model produced output we cannot use.
enum class ErrorCategory { Validation = 1, Provider = 2, ModelOutput = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const { return category_; }

private:
    ErrorCategory category_;
};

struct ValidationIssue {
    std::size_t row = 0;        // 1-based input row, 0 when not row-scoped
    std::string kind;           // e.g. "malformed-record", "dangling-example-ref"
    std::string field;
    std::string message;

    std::string to_string() const {
        std::string out;
        if (row > 0) out += "row " + std::to_string(row) + ": ";
        out += kind;
        if (!field.empty()) out += " (" + field + ")";
        out += ": " + message;
        return out;
    }
};

// Carries every problem found in one pass, not just the first.
class ValidationError : public Error {
public:
    ValidationError(const std::string& context, std::vector<ValidationIssue> issues)
        : Error(ErrorCategory::Validation, render(context, issues)),
          issues_(std::move(issues)) {}

    const std::vector<ValidationIssue>& issues() const { return issues_; }

private:
    static std::string render(const std::string& context,
                              const std::vector<ValidationIssue>& issues) {
        std::string out = context + ": " + std::to_string(issues.size()) + " issue(s)";
        for (const auto& issue : issues) out += "\n  " + issue.to_string();
        return out;
    }

    std::vector<ValidationIssue> issues_;
};

// ---- providers ----

class TransportError : public Error {
public:
    explicit TransportError(const std::string& msg) : Error(ErrorCategory::Provider, msg) {}
};

class RateLimitedError : public Error {
public:
    RateLimitedError(const std::string& msg, long retry_after_seconds)
        : Error(ErrorCategory::Provider, msg), retry_after_seconds_(retry_after_seconds) {}
    long retry_after_seconds() const { return retry_after_seconds_; }

private:
    long retry_after_seconds_;
};

class NonSuccessStatusError : public Error {
public:
    NonSuccessStatusError(const std::string& msg, int status)
        : Error(ErrorCategory::Provider, msg), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

class EmptyCompletionError : public Error {
public:
    explicit EmptyCompletionError(const std::string& msg) : Error(ErrorCategory::Provider, msg) {}
};

class MissingCredentialError : public Error {
public:
    explicit MissingCredentialError(const std::string& msg) : Error(ErrorCategory::Provider, msg) {}
};

class CacheMissOfflineError : public Error {
public:
    explicit CacheMissOfflineError(const std::string& msg) : Error(ErrorCategory::Provider, msg) {}
};

class CorruptArchiveError : public Error {
public:
    explicit CorruptArchiveError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

class DimensionMismatchError : public Error {
public:
    explicit DimensionMismatchError(const std::string& msg,
                                    ErrorCategory category = ErrorCategory::Validation)
        : Error(category, msg) {}
};

// ---- embed ----

class ZeroNormVectorError : public Error {
public:
    explicit ZeroNormVectorError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

class OutOfRangeScoreError : public Error {
public:
    explicit OutOfRangeScoreError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

class UnknownRecordIdError : public Error {
public:
    explicit UnknownRecordIdError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

// ---- judge ----

class MissingFieldError : public Error {
public:
    explicit MissingFieldError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

class UnparseableVerdictError : public Error {
public:
    explicit UnparseableVerdictError(const std::string& msg) : Error(ErrorCategory::ModelOutput, msg) {}
};

// ---- augment ----

class NotJsonError : public Error {
public:
    explicit NotJsonError(const std::string& msg) : Error(ErrorCategory::ModelOutput, msg) {}
};

class WrongArityError : public Error {
public:
    explicit WrongArityError(const std::string& msg) : Error(ErrorCategory::ModelOutput, msg) {}
};

class DuplicateExplanationError : public Error {
public:
    explicit DuplicateExplanationError(const std::string& msg) : Error(ErrorCategory::ModelOutput, msg) {}
};

class CollidesWithExpertError : public Error {
public:
    explicit CollidesWithExpertError(const std::string& msg) : Error(ErrorCategory::ModelOutput, msg) {}
};

class EmptyExplanationError : public Error {
public:
    explicit EmptyExplanationError(const std::string& msg) : Error(ErrorCategory::ModelOutput, msg) {}
};

class GenerationExhaustedError : public Error {
public:
    explicit GenerationExhaustedError(const std::string& msg) : Error(ErrorCategory::ModelOutput, msg) {}
};

class InsufficientSyntheticError : public Error {
public:
    explicit InsufficientSyntheticError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

// ---- classify / eval ----

class NoPositivesError : public Error {
public:
    explicit NoPositivesError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

class ClassTooSmallError : public Error {
public:
    explicit ClassTooSmallError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

class IdSetMismatchError : public Error {
public:
    explicit IdSetMismatchError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

class EmptyMatrixError : public Error {
public:
    explicit EmptyMatrixError(const std::string& msg) : Error(ErrorCategory::Validation, msg) {}
};

}  // namespace explaingrade
