#pragma once

#include <stdexcept>
#include <string>

namespace qsrnet {

/// An input violated a documented precondition (wrong shape, bad range, ...).
struct InvalidArgument : std::runtime_error {
    explicit InvalidArgument(const std::string& what) : std::runtime_error(what) {}
};

/// An iteration failed to converge or produced an inconsistent numerical answer.
struct NumericalFailure : std::runtime_error {
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

/// A linear solve met a pivot too small to trust.
struct SingularMatrix : std::runtime_error {
    explicit SingularMatrix(const std::string& what) : std::runtime_error(what) {}
};

/// The (A, B) pair handed to a Riccati/LQR routine is not stabilizable.
struct NotStabilizable : std::runtime_error {
    explicit NotStabilizable(const std::string& what) : std::runtime_error(what) {}
};

/// A configuration or serialized document failed schema validation; the
/// message carries a file:line locator when one is known.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A supply-rate family does not satisfy the preconditions of a combination rule.
struct NotApplicable : std::runtime_error {
    explicit NotApplicable(const std::string& what) : std::runtime_error(what) {}
};

/// A user-supplied epsilon sequence is out of the admissible range.
struct InvalidEpsilon : std::runtime_error {
    explicit InvalidEpsilon(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qsrnet
