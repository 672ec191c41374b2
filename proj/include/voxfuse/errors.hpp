// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voxfuse {

enum class ErrorCode {
    NonFinite,
    NonPositiveScale,
    OutOfRangeOpacity,
    OutOfRangeColor,
    OutOfRangeTimestamp,
    ZeroQuaternion,
    InvalidCamera,
    InvalidDepth,
    MissingGaussianMap,
    EmptyInput,
    EmptyTrack,
    NonPositiveRho,
    DimensionMismatch,
    EmptyVoxel,
    DegenerateQuaternionSum,
    QueryFrameAbsent,
    EmptyValidSet,
    NonInvertibleCov,
    ShapeMismatch,
    NonFiniteComponent,
    ImageTooSmall,
    BadConfig,
    NoMatchedVoxels,
    NonFiniteObjective,
    DivergedLoss,
    MalformedHeader,
    UnsupportedProperty,
    MissingFile,
    BadTimestamps,
    InvalidArgument,
    IoFailure,
};

std::string_view to_string(ErrorCode code);

/// Exception type thrown by every module. The code is stable and machine-readable;
/// the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace voxfuse
