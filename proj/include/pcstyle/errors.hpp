#pragma once

#include <stdexcept>
#include <string>

namespace pcstyle {

/// Bad shapes, out-of-range parameters, non-finite weights.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A mask selects no usable pixels (after binarization or downsampling).
class EmptyRegionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint container is truncated, malformed, or does not match the architecture.
class CheckpointFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input exceeds the documented size limits.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Run configuration is malformed (unknown key, bad value, empty method list).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace pcstyle
