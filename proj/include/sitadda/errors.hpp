#pragma once

#include <stdexcept>
#include <string>

namespace sitadda {

/// Input dimensions incompatible with a model or operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value (non-positive factor, empty domain, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Unreadable, unpaired or otherwise malformed input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Freeze index outside [0, n].
class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// A statistic that is undefined for the given input (constant image,
/// all-zero paired differences, zero-norm embedding).
class DegenerateError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// No candidate survived the exclusion rule.
class SelectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sitadda
