#pragma once

#include <stdexcept>
#include <string>

namespace stepgame {

// Base class for all toolkit errors. Catch this at CLI level to map onto exit code 1.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data: bad catalog lines, bad JSONL, unknown labels, bad config.
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Violated operation precondition or unusable domain state (irreparable template,
// degenerate triple, chain referencing a sentence that fails extraction, ...).
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Transport-level backend failures (HTTP errors, exhausted retries, missing credentials).
struct BackendError : Error {
    explicit BackendError(const std::string& msg) : Error(msg) {}
};

// The prompt exceeded the model's context window (reported by the endpoint).
struct ContextOverflowError : BackendError {
    explicit ContextOverflowError(const std::string& msg) : BackendError(msg) {}
};

}  // namespace stepgame
