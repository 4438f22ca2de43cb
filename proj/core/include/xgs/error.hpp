#pragma once

#include <stdexcept>
#include <string>

namespace xgs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition on an argument (shape, range, non-finite value).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Object is in a state where the operation cannot proceed (e.g. empty codebook).
class InvalidState : public Error {
public:
    using Error::Error;
};

class BehindCamera : public Error {
public:
    using Error::Error;
};

class EmptyScene : public Error {
public:
    using Error::Error;
};

class CorruptAnnotation : public Error {
public:
    using Error::Error;
};

/// Malformed file contents; `line` is 1-based when known, 0 otherwise.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line = 0) : Error(what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

/// Bad run configuration: unknown key, unparsable value, out-of-range setting.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = 0) : Error(what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

}  // namespace xgs
