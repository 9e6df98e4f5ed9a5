#pragma once

#include <stdexcept>
#include <string>

namespace lwp {

/// Operand shapes do not satisfy an operation's precondition.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf was produced (or would be produced) by an operation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument value (range, domain, configuration).
class ValueError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Misuse of an object's lifecycle (e.g. backward twice without reset).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed external input (CSV, JSON, config).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lwp
