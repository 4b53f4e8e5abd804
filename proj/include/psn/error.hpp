#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psn {

/// Raised when tensor extents do not line up for an operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a caller violates a documented precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Raised by binary readers; carries the byte offset where decoding failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset)
    {
    }

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Raised when training produces a non-finite value.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& tensor_name, const std::string& where)
        : std::runtime_error("non-finite value in tensor '" + tensor_name + "' " + where),
          tensor_(tensor_name)
    {
    }

    const std::string& tensor_name() const noexcept { return tensor_; }

private:
    std::string tensor_;
};

} // namespace psn
