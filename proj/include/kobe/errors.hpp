#pragma once

#include <stdexcept>
#include <string>

namespace kobe {

// Error taxonomy. Callers that want to distinguish catch the subtype;
// everything derives from Error so the CLI can map any failure to exit 1.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes disagree with an operation's requirements.
struct ShapeError : Error {
    using Error::Error;
};

// A precondition of an operation was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// Invalid configuration value (dimensions, rates, beam size, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

// backward() called twice, or on a tensor not on the active tape.
struct TapeError : Error {
    using Error::Error;
};

// Malformed input file; message carries the line number where known.
struct ParseError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace kobe
