#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stagerm {

// Error categories double as process exit codes so the CLI can map any
// escaped exception to the documented code without a translation table.
enum class ErrorCategory {
    usage = 2,
    validation = 3,
    numerical = 4,
    io = 5,
};

inline const char* to_string(ErrorCategory c) {
    switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::numerical: return "numerical";
    case ErrorCategory::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string message)
        : std::runtime_error(std::move(message)), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }
    int exit_code() const noexcept { return static_cast<int>(category_); }

private:
    ErrorCategory category_;
};

struct UsageError : Error {
    explicit UsageError(std::string m) : Error(ErrorCategory::usage, std::move(m)) {}
};

struct ValidationError : Error {
    explicit ValidationError(std::string m) : Error(ErrorCategory::validation, std::move(m)) {}
};

struct NumericalError : Error {
    explicit NumericalError(std::string m) : Error(ErrorCategory::numerical, std::move(m)) {}
};

struct IoError : Error {
    explicit IoError(std::string m) : Error(ErrorCategory::io, std::move(m)) {}
};

} // namespace stagerm
