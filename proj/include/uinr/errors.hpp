#pragma once

#include <stdexcept>
#include <string>

namespace uinr {

// Exit-code mapping used by the CLI: config=2, io=3, numeric=4, contract=5.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Misuse of an API contract: mismatched shapes, missing caches, bad domains.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace uinr
