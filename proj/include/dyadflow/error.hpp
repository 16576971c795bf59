#pragma once

#include <stdexcept>
#include <string>

namespace dyadflow {

/// Root of every error raised by the library. `kind()` maps onto the CLI exit codes.
class Error : public std::runtime_error {
public:
    enum class Kind { invalid_input, numerics, io, config };

    Error(Kind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string &what) : Error(Kind::invalid_input, what) {}
};

class InvalidState : public Error {
public:
    explicit InvalidState(const std::string &what) : Error(Kind::numerics, what) {}
};

/// Cholesky failed at every jitter level; carries the smallest diagonal pivot seen.
class NotPositiveDefinite : public Error {
public:
    NotPositiveDefinite(const std::string &what, double min_pivot)
        : Error(Kind::numerics, what + " (min diagonal pivot " + std::to_string(min_pivot) + ")"),
          min_pivot_(min_pivot) {}
    [[nodiscard]] double min_pivot() const noexcept { return min_pivot_; }

private:
    double min_pivot_;
};

class SizeLimit : public Error {
public:
    explicit SizeLimit(const std::string &what) : Error(Kind::numerics, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string &what) : Error(Kind::config, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string &what) : Error(Kind::io, what) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string &file, long row, const std::string &what)
        : Error(Kind::io, file + ": row " + std::to_string(row) + ": " + what), row_(row) {}
    [[nodiscard]] long row() const noexcept { return row_; }

private:
    long row_;
};

class SchemaMismatch : public Error {
public:
    SchemaMismatch(int found, int expected)
        : Error(Kind::io, "chain schema version " + std::to_string(found) +
                              " cannot be migrated to supported version " + std::to_string(expected)),
          found_(found), expected_(expected) {}
    [[nodiscard]] int found() const noexcept { return found_; }
    [[nodiscard]] int expected() const noexcept { return expected_; }

private:
    int found_;
    int expected_;
};

}  // namespace dyadflow
