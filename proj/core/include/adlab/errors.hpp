#pragma once

#include <stdexcept>
#include <string>

namespace adlab {

// Invalid configuration (bad shapes, out-of-range knobs).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or out-of-domain data (unknown feature id, non-finite label).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (stale tape, mismatched call sequence).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure mid-run (NaN gradient or loss).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace adlab
