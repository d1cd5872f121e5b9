#ifndef PEXP_ERROR_HPP
#define PEXP_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pexp {

/// Parameter outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Iterative routine failed to converge, or produced a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A Monte-Carlo estimate was requested in a regime where it cannot be
/// trusted (too few hits); callers get this instead of a fabricated value.
class InfeasibleError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Invalid configuration document or field.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

namespace detail {

inline void require(bool ok, const char* what) {
    if (!ok) {
        throw DomainError(what);
    }
}

} // namespace detail

} // namespace pexp

#endif
