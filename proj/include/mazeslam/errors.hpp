#pragma once

#include <stdexcept>
#include <string>

namespace mazeslam {

/// A file or message that does not match its format (carries a line number
/// when one is meaningful; 0 otherwise).
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Filesystem failures (open, read, write).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violations by the caller.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace mazeslam
