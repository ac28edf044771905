#pragma once

#include <stdexcept>
#include <string>

namespace slimtsf {

/// Error classes raised by the library. The CLI maps each kind to an exit code.
enum class ErrorKind {
    Argument,
    Schema,
    Validation,
    Label,
    Training,
    UndefinedScore,
    Io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Argument: return "argument";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Label: return "label";
    case ErrorKind::Training: return "training";
    case ErrorKind::UndefinedScore: return "undefined_score";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define SLIMTSF_DEFINE_ERROR(Name, Kind)                                        \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(Kind, message) {}    \
    };

SLIMTSF_DEFINE_ERROR(ArgumentError, ErrorKind::Argument)
SLIMTSF_DEFINE_ERROR(SchemaError, ErrorKind::Schema)
SLIMTSF_DEFINE_ERROR(ValidationError, ErrorKind::Validation)
SLIMTSF_DEFINE_ERROR(LabelError, ErrorKind::Label)
SLIMTSF_DEFINE_ERROR(TrainingError, ErrorKind::Training)
SLIMTSF_DEFINE_ERROR(UndefinedScoreError, ErrorKind::UndefinedScore)

#undef SLIMTSF_DEFINE_ERROR

/// Filesystem failure; carries the offending path.
class IoError : public Error {
public:
    IoError(const std::string& message, std::string path)
        : Error(ErrorKind::Io, message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace slimtsf
