#pragma once

#include <stdexcept>
#include <string>

namespace langmanip {

/// Base class for every error the library raises on purpose. `kind()` is a
/// stable machine-readable tag; the what() string carries context.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define LANGMANIP_DEFINE_ERROR(NAME, TAG)                       \
    class NAME : public Error {                                 \
    public:                                                     \
        explicit NAME(const std::string& msg) : Error(TAG, msg) {} \
    }

// Simulation
LANGMANIP_DEFINE_ERROR(PlacementFailureError, "placement-failure");
LANGMANIP_DEFINE_ERROR(EmptySceneError, "empty-scene");
LANGMANIP_DEFINE_ERROR(OutOfWorkspaceError, "out-of-workspace");
LANGMANIP_DEFINE_ERROR(DemoFailureError, "demo-failure");

// Episode data
LANGMANIP_DEFINE_ERROR(TooShortError, "too-short");
LANGMANIP_DEFINE_ERROR(VocabularyError, "vocabulary");
LANGMANIP_DEFINE_ERROR(CorruptHeaderError, "corrupt-header");
LANGMANIP_DEFINE_ERROR(TruncationError, "truncation");
LANGMANIP_DEFINE_ERROR(ChecksumMismatchError, "checksum-mismatch");
LANGMANIP_DEFINE_ERROR(InsufficientDataError, "insufficient-data");

// Encoders / policy
LANGMANIP_DEFINE_ERROR(EmptyTextError, "empty-text");
LANGMANIP_DEFINE_ERROR(InvalidInputError, "invalid-input");
LANGMANIP_DEFINE_ERROR(InvalidStateError, "invalid-state");
LANGMANIP_DEFINE_ERROR(NoInstructionError, "no-instruction");
LANGMANIP_DEFINE_ERROR(IndexError, "index");
LANGMANIP_DEFINE_ERROR(ShapeError, "shape");
LANGMANIP_DEFINE_ERROR(InvalidQuaternionError, "invalid-quaternion");

// Prompt bases
LANGMANIP_DEFINE_ERROR(MissingKeyError, "missing-key");
LANGMANIP_DEFINE_ERROR(EmptyBatchError, "empty-batch");
LANGMANIP_DEFINE_ERROR(SplitGuardError, "split-guard");

// Training / evaluation
LANGMANIP_DEFINE_ERROR(TrainAbortError, "train-abort");
LANGMANIP_DEFINE_ERROR(IncompatibleAblationError, "incompatible-ablation");
LANGMANIP_DEFINE_ERROR(IoError, "io");

#undef LANGMANIP_DEFINE_ERROR

}  // namespace langmanip
