#pragma once

#include <stdexcept>
#include <string>

namespace evex {

/// Root of every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Out-of-range parameters, malformed configuration, mismatched dimensions.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    enum class Kind { FileNotFound, MalformedPng, UnsupportedFormat, MalformedText, WriteFailed };

    IoError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class ClassifierError : public Error {
public:
    enum class Kind { SpawnFailed, Timeout, ProtocolViolation, InvalidOutput, ProcessFailed };

    ClassifierError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Raised when a segmentation has fewer than two segments and cannot be explained.
class DegenerateSegmentation : public Error {
public:
    using Error::Error;
};

} // namespace evex
