#pragma once

#include <stdexcept>
#include <string>

namespace peerweave {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input files, bad scenario parameters, malformed JSON documents.
struct ConfigError : Error {
    using Error::Error;
};

struct DuplicateSignatureError : Error {
    using Error::Error;
};

struct InvalidDimensionError : ConfigError {
    using ConfigError::ConfigError;
};

struct UnknownLayerError : ConfigError {
    using ConfigError::ConfigError;
};

struct PathExplosionError : Error {
    using Error::Error;
};

// Raised when every switch-path candidate is already known failed.
struct NoAlternativeError : Error {
    using Error::Error;
};

struct InfeasibleDeltaError : Error {
    using Error::Error;
};

struct MissingPeerError : Error {
    using Error::Error;
};

struct MissingLayerError : Error {
    using Error::Error;
};

struct MissingPathError : Error {
    using Error::Error;
};

// Exact enumeration refused; the caller should fall back to Monte Carlo.
struct SizeLimitError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct NoCacheConfiguredError : Error {
    using Error::Error;
};

// Wire codec failures (malformed frame, unknown message kind).
struct CodecError : Error {
    using Error::Error;
};

struct TransportError : Error {
    using Error::Error;
};

}  // namespace peerweave
