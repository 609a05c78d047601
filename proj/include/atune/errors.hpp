#pragma once

#include <stdexcept>
#include <string>

namespace atune {

// Exit codes used by the command-line tool. Each error category below maps
// onto exactly one of these.
enum class ExitCode : int {
    Ok = 0,
    Validation = 2,
    Numeric = 3,
    MissingArtifact = 4,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept { return ExitCode::Validation; }
};

/// A caller broke an API precondition (shape mismatch, misaligned sequences).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// An inconsistent model or run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// User-supplied values that fail schema or range validation.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered, or a loss that diverged.
class NumericError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::Numeric; }
};

/// A file the run depends on does not exist or cannot be parsed.
class MissingArtifact : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::MissingArtifact; }
};

}  // namespace atune
