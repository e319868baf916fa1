#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// All library failures are reported through these exception types.
// Callers that need a stable taxonomy (the CLI exit codes, tests) catch
// the specific type; everything derives from std::runtime_error.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyInputError : std::runtime_error {
    explicit EmptyInputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VocabularyError : std::runtime_error {
    explicit VocabularyError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MaskError : std::runtime_error {
    explicit MaskError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StratificationError : std::runtime_error {
    explicit StratificationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fedsim
