#ifndef KINFRAC_ERRORS_HPP
#define KINFRAC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kinfrac {

/// Malformed or inconsistent user input (files, tables, flags).
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Newick / table parse failures carry the offending position when known.
class ParseError : public InputError {
public:
    ParseError(const std::string& msg, std::size_t pos)
        : InputError(msg + " (at offset " + std::to_string(pos) + ")"), position(pos) {}
    explicit ParseError(const std::string& msg) : InputError(msg), position(0) {}
    std::size_t position;
};

/// Numerical failure: factorization breakdown, optimizer divergence, ...
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Cholesky hit a non-positive pivot; `pivot` is the 0-based index.
class NotPositiveDefiniteError : public NumericalError {
public:
    NotPositiveDefiniteError(const std::string& msg, int pivot_index)
        : NumericalError(msg + " (pivot " + std::to_string(pivot_index) + ")"),
          pivot(pivot_index) {}
    int pivot;
};

/// A method that is mathematically undefined for the given node/input
/// (e.g. logit transform of a whole-tree abundance, which is identically 1).
class NotApplicableError : public std::runtime_error {
public:
    explicit NotApplicableError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kinfrac

#endif
