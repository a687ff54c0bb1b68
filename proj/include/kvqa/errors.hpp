#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kvqa {

// Root of every error the library throws. The CLI maps each subclass to its
// own exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Precondition or numeric-domain violation (zero vectors, probabilities out of
// range, dimension mismatches).
class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

class RetrievalError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class IngestionError : public Error {
public:
    using Error::Error;
};

// Persisted artifact has the wrong format tag, version or fails its audit.
class FormatError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

// Backend could not be reached after all retry attempts.
class TransportError : public BackendError {
public:
    TransportError(const std::string& what, std::size_t attempts)
        : BackendError(what), attempts_(attempts) {}

    std::size_t attempts() const noexcept { return attempts_; }

private:
    std::size_t attempts_;
};

// Backend answered, but the payload violates the gateway contract.
class MalformedOutputError : public BackendError {
public:
    using BackendError::BackendError;
};

}  // namespace kvqa
