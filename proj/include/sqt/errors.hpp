#pragma once

#include <stdexcept>
#include <string>

namespace sqt {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition on a user-supplied value.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Physics-domain failures. Callers that sweep parameters catch this base.
class DomainError : public Error {
public:
    using Error::Error;
};

/// (1 - r_A r'_B) is too ill-conditioned to invert: at or beyond the laser threshold.
class NearSingularCavity : public DomainError {
public:
    using DomainError::DomainError;
};

/// An amplifying composite with SS^dagger - 1 not positive semidefinite.
class GainPositivityViolation : public DomainError {
public:
    using DomainError::DomainError;
};

class ThresholdReached : public DomainError {
public:
    using DomainError::DomainError;
};

class SingularResolvent : public DomainError {
public:
    using DomainError::DomainError;
};

class ZeroMeanCount : public DomainError {
public:
    using DomainError::DomainError;
};

class ZeroTransmission : public DomainError {
public:
    using DomainError::DomainError;
};

class AllSamplesAboveThreshold : public DomainError {
public:
    using DomainError::DomainError;
};

class FitFailed : public Error {
public:
    using Error::Error;
};

class TruncationLeak : public Error {
public:
    using Error::Error;
};

/// Malformed configuration; the message names the offending line or field.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace sqt
