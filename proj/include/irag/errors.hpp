#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace irag {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad option values, unknown format tags, violated operation preconditions.
class ConfigError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Input stream could not be decoded; carries the byte offset of the failure.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : Error(what + " (at byte " + std::to_string(byte_offset) + ")"), byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

/// Line-oriented file that violates its schema; carries the 1-based line.
class LoadError : public Error {
public:
    LoadError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Corrupt index file, dimension mismatch, or other broken data invariant.
class IntegrityError : public Error {
public:
    IntegrityError(const std::string& what, std::string section = {})
        : Error(section.empty() ? what : "[" + section + "] " + what), section_(std::move(section)) {}

    const std::string& section() const noexcept { return section_; }

private:
    std::string section_;
};

class VersionError : public Error {
public:
    using Error::Error;
};

/// Model server failure after retries. status is 0 for transport failures.
class GatewayError : public Error {
public:
    GatewayError(const std::string& what, int status = 0, std::string body = {})
        : Error(what), status_(status), body_(std::move(body)) {}

    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

class TimeoutError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

/// Judge output never parsed into an in-scale verdict.
class VerdictInvalidError : public Error {
public:
    VerdictInvalidError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// Index build aborted part way; what() includes the progress made.
class IndexBuildError : public Error {
public:
    IndexBuildError(const std::string& what, std::size_t embedded, std::size_t total)
        : Error(what), embedded_(embedded), total_(total) {}

    std::size_t embedded() const noexcept { return embedded_; }
    std::size_t total() const noexcept { return total_; }

private:
    std::size_t embedded_;
    std::size_t total_;
};

class RetrievalError : public Error {
public:
    using Error::Error;
};

/// Model output for an explanation stayed unusable after repair prompts.
class GenerationError : public Error {
public:
    GenerationError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

}  // namespace irag
