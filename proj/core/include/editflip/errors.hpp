#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace editflip {

/// Base class for all editflip errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration, CLI arguments, or input files (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Dataset record failed parsing or validation; carries the 1-based line number.
class DatasetError : public Error {
public:
    DatasetError(std::size_t line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Transport-level backend failure that persisted through the retry budget.
class BackendError : public Error {
public:
    using Error::Error;
};

/// Backend answered, but the response violates the wire contract
/// (zero continuation tokens, length mismatch, embedding dimension drift, ...).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Edit-generator response from which no (previous , new) pair could be extracted.
/// Keeps the raw text around so it can be logged or traced.
class ProposalParseError : public Error {
public:
    explicit ProposalParseError(std::string raw_text)
        : Error("no edit pairs could be parsed from generator output"),
          raw_text_(std::move(raw_text)) {}

    const std::string& raw_text() const { return raw_text_; }

private:
    std::string raw_text_;
};

/// Replaying a recorded edit path failed; carries the 0-based failing step.
class ReplayError : public Error {
public:
    ReplayError(std::size_t step, const std::string& message)
        : Error("replay step " + std::to_string(step) + ": " + message), step_(step) {}

    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// Cosine similarity is undefined (zero-norm embedding).
class UndefinedSimilarityError : public Error {
public:
    using Error::Error;
};

/// A report could not be computed from the given results (e.g. a successful
/// attack without a quality report).
class ReportingError : public Error {
public:
    using Error::Error;
};

}  // namespace editflip
