#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsiml {

// Invalid or unusable input data (bad files, empty datasets, missing entities).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed text input; carries the 1-based line number.
class ParseError : public DataError {
public:
    ParseError(const std::string& msg, std::size_t line)
        : DataError(msg + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Optimization produced non-finite values.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dsiml
