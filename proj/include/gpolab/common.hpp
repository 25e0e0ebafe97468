#pragma once

#include <stdexcept>
#include <string>

namespace gpolab {

// Exit codes used by the CLI (see tools/gpo_lab.cpp).
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Bad flags, bad config values, malformed inputs. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (wrong shapes, out-of-range arguments). CLI exit code 2.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf escaped a numeric operation. CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gpolab
