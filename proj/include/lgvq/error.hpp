#pragma once

#include <stdexcept>
#include <string>

namespace lgvq {

/// Base of every error the library throws. Each subclass maps onto one CLI
/// exit code (see tools/lgvq_main.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or image dimensions that do not fit the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (unknown key, bad value). Carries every problem
/// found, one per line.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Manifest, image, or vocabulary problems.
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss during training.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Unreadable, corrupted or incompatible checkpoint archive.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Violated precondition (out-of-range id, zero-norm vector, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

}  // namespace lgvq
