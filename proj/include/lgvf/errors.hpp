#pragma once

#include <stdexcept>
#include <string>

namespace lgvf {

// Error taxonomy used across the library. All derive from Error so callers
// can catch the whole family at the CLI boundary.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes or axes do not line up.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Math domain violation (log of non-positive input, etc).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// API contract violated (non-scalar loss, mismatched sequence lengths, ...).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Non-finite values encountered during numeric evolution.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Malformed input data (negative spike counts, ...).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// On-disk format violations; carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    explicit FormatError(const std::string& msg) : Error(msg), offset(0) {}
    std::size_t offset;
};

}  // namespace lgvf
