#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hbnode {

/// Extents of two operands (or an operand and a layout) disagree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A requested span or index lies outside the available data.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// An iterative numerical routine failed to converge within its budget.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input is well-formed but structurally unusable (e.g. odd block dimension).
class StructuralError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A required column or key is missing.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A cell could not be parsed. `row` is the 1-based data row (header excluded).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t row)
        : std::runtime_error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Parsed data violates a semantic constraint (e.g. duplicate timestamps).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require_dim(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

}  // namespace hbnode
