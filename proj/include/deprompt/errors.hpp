#pragma once

#include <stdexcept>
#include <string>

namespace deprompt {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input record or document (carries a 1-based line number when known).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? "line " + std::to_string(line) + ": " + msg : msg),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

/// Dataset-level validation failure (bad spans, duplicate ids, missing annotations).
class DataError : public Error {
public:
    using Error::Error;
};

class DuplicateIdError : public DataError {
public:
    explicit DuplicateIdError(const std::string& id)
        : DataError("duplicate prompt id: " + id) {}
};

class SpanError : public DataError {
public:
    using DataError::DataError;
};

/// The surface string is no longer found at the recorded offsets (stale span).
class SpanMismatchError : public SpanError {
public:
    using SpanError::SpanError;
};

/// Invalid or incomplete configuration; message names the offending key path.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Transport or protocol failure talking to a model endpoint.
class GatewayError : public Error {
public:
    enum class Kind { Timeout, Auth, RateLimited, Malformed };

    GatewayError(Kind kind, const std::string& msg)
        : Error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Model reply carried no parseable annotation payload.
class ResponseFormatError : public Error {
public:
    using Error::Error;
};

class DimensionMismatchError : public Error {
public:
    DimensionMismatchError(size_t a, size_t b)
        : Error("vector dimensions differ: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class ZeroVectorError : public Error {
public:
    ZeroVectorError() : Error("cosine similarity undefined for a zero vector") {}
};

class EmptyTextError : public Error {
public:
    EmptyTextError() : Error("text yields no tokens") {}
};

class EmptyAnnotationsError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateDatasetError : public DataError {
public:
    using DataError::DataError;
};

class InsufficientIdentifiersError : public DataError {
public:
    using DataError::DataError;
};

} // namespace deprompt
