#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace maskplan {

// All recoverable failures carry a category string; the CLI prints
// "<category>: <message>" on stderr and exits nonzero.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& msg)
        : std::runtime_error(msg), category_(std::move(category)) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config-error", m) {}
};
struct RangeError : Error {
    explicit RangeError(const std::string& m) : Error("range-error", m) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& m) : Error("contract-error", m) {}
};
struct IncompleteSequenceError : Error {
    explicit IncompleteSequenceError(const std::string& m) : Error("incomplete-sequence-error", m) {}
};
struct GenerationError : Error {
    explicit GenerationError(const std::string& m) : Error("generation-error", m) {}
};
struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& m) : Error("degenerate-input-error", m) {}
};
struct StaleCacheError : Error {
    explicit StaleCacheError(const std::string& m) : Error("stale-cache-error", m) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("numeric-error", m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error("io-error", m) {}
};

}  // namespace maskplan
