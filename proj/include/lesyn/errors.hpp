#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lesyn {

/// Bad caller input: shapes, ranges, malformed histograms.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyMaskError : public InvalidArgument {
public:
    EmptyMaskError() : InvalidArgument("mask has no foreground pixels") {}
    explicit EmptyMaskError(const std::string& what) : InvalidArgument(what) {}
};

class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TransformError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PlacementError : public std::runtime_error {
public:
    PlacementError(const std::string& what, int attempts)
        : std::runtime_error(what), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class DatasetBuildError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a loss becomes non-finite; carries the step that diverged.
class TrainingDivergence : public std::runtime_error {
public:
    TrainingDivergence(const std::string& what, std::int64_t step)
        : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

}  // namespace lesyn
