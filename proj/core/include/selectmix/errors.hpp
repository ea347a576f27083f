#pragma once

#include <stdexcept>
#include <string>

namespace selectmix {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension or alignment mismatch between containers that must agree.
struct ShapeError : Error {
    using Error::Error;
};

// Non-finite or otherwise unusable numeric input.
struct InputError : Error {
    using Error::Error;
};

// Malformed file contents (IDX magic/truncation, CSV headers, config keys).
struct FormatError : Error {
    using Error::Error;
};

// Invalid parameter combination (alpha <= 0, degenerate pair_map, ...).
struct SpecError : Error {
    using Error::Error;
};

// Optimization produced non-finite values.
struct TrainingError : Error {
    using Error::Error;
};

// Invalid fold plan request.
struct PlanError : Error {
    using Error::Error;
};

struct EstimationError : Error {
    using Error::Error;
};

struct EvaluationError : Error {
    using Error::Error;
};

}  // namespace selectmix
