#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gprl {

/// Caller violated a documented precondition (bad sizes, empty inputs, ...).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A state/input vector does not match what a tree, model or env expects.
class InputShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed infix expression. `position` is a 0-based character offset.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}

    [[nodiscard]] std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Well-formed expression whose node types do not fit their parents' signatures.
class TypeError : public ParseError {
public:
    using ParseError::ParseError;
};

/// Unreadable or inconsistent data/model files.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace gprl
