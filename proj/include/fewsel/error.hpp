#pragma once

#include <stdexcept>
#include <string>

namespace fewsel {

// Exit codes used by the CLI (and anything else mapping errors to a shell).
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitBackend = 3,
    kExitBudget = 4,
};

// Bad configuration, bad CLI arguments, unknown criterion names, etc.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or invariant-violating data: datasets, templates, artifacts.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Scoring backend failure (transport, missing replay entry, unknown id...).
struct BackendError : std::runtime_error {
    explicit BackendError(const std::string& msg, bool retryable = false)
        : std::runtime_error(msg), retryable(retryable) {}
    bool retryable;
};

// The configured upstream pass budget ran out mid-run.
struct BudgetExhausted : std::runtime_error {
    explicit BudgetExhausted(std::uint64_t budget)
        : std::runtime_error("pass budget exhausted (" + std::to_string(budget) + " passes)"),
          budget(budget) {}
    std::uint64_t budget;
};

} // namespace fewsel
