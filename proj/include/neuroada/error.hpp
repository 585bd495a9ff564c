// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace neuroada {

/// Shape disagreement between tensors/matrices. Message names both shapes.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Invalid argument value (k out of range, bad fraction, empty warmup set, ...).
struct ParamError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Broken call contract: mismatched plan/matrix pairs, non-scalar backward,
/// incompatible run configs.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Use of an object past its lifecycle end (e.g. merging a consumed delta).
struct LifecycleError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Non-finite value encountered where finite arithmetic was required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid or unparsable configuration; message carries field paths.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A verification (oracle-suite) check failed.
struct VerifyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace neuroada
