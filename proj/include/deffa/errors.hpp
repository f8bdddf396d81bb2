#pragma once

#include <stdexcept>
#include <string>

namespace deffa {

/// Input or configuration violates a documented precondition.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A file could not be read, decoded, or written.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// A statistic is undefined for the given input (e.g. AUC with one class).
class DegenerateError : public std::domain_error {
public:
    explicit DegenerateError(const std::string& what) : std::domain_error(what) {}
};

/// Training produced a non-finite value.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace deffa
