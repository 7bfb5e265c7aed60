// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pmq {

/// Root of every error thrown by the library. The CLI maps the concrete
/// subclasses onto exit codes (config 2, numeric 3, I/O 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown: non-finite input, asymmetric curvature, failed solve.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Cholesky hit a non-positive pivot.
class SingularError : public NumericError {
public:
    SingularError(std::size_t pivot, const std::string& what)
        : NumericError(what), pivot_(pivot) {}

    [[nodiscard]] std::size_t pivot() const noexcept { return pivot_; }

private:
    std::size_t pivot_;
};

class IoError : public Error {
public:
    using Error::Error;
};

enum class ParseErrorKind { MalformedHeader, DtypeMismatch, TruncatedPayload, PayloadLength };

class ParseError : public IoError {
public:
    ParseError(ParseErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}

    [[nodiscard]] ParseErrorKind kind() const noexcept { return kind_; }

private:
    ParseErrorKind kind_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace pmq
