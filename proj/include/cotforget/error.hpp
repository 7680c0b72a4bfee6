// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cotforget {

enum class ErrorKind {
    parse,
    validation,
    format,
    transport,
    config,
    truncation,
    empty_mask,
    scoring,
    divergence,
};

/// Base of every error the library raises. The CLI maps `kind()` onto exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ParseError : Error {
    explicit ParseError(const std::string& m) : Error(ErrorKind::parse, m) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& m) : Error(ErrorKind::validation, m) {}
};

/// An endpoint replied, but the reply does not have the required shape.
struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error(ErrorKind::format, m) {}
};

/// Network/provider failure after the retry budget was spent.
struct TransportError : Error {
    TransportError(const std::string& m, std::vector<std::string> attempts = {})
        : Error(ErrorKind::transport, m), attempt_log(std::move(attempts)) {}
    std::vector<std::string> attempt_log;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(ErrorKind::config, m) {}
};

struct TruncationError : Error {
    explicit TruncationError(const std::string& m) : Error(ErrorKind::truncation, m) {}
};

struct EmptyMaskError : Error {
    explicit EmptyMaskError(const std::string& m) : Error(ErrorKind::empty_mask, m) {}
};

struct ScoringError : Error {
    explicit ScoringError(const std::string& m) : Error(ErrorKind::scoring, m) {}
};

struct DivergenceError : Error {
    DivergenceError(const std::string& m, std::string last_good)
        : Error(ErrorKind::divergence, m), last_good_checkpoint(std::move(last_good)) {}
    std::string last_good_checkpoint;
};

}  // namespace cotforget
