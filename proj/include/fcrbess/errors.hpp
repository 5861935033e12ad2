#pragma once

#include <stdexcept>
#include <string>

namespace fcrbess {

/// Input outside the domain of a model function (e.g. SoC outside [0, 1]).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Requested cell power exceeds what the cell can physically deliver.
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CSV rows, gaps, missing prices).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The battery cannot sustain the prequalification profile at power r.
class PrequalificationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fcrbess
