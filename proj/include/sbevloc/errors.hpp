#pragma once

#include <stdexcept>
#include <string>

namespace sbevloc {

/// Coarse failure class, used by the CLI to pick an exit code:
/// usage -> 1, data -> 2, numeric -> 3.
enum class ErrorKind { usage, data, numeric };

struct Error : std::runtime_error {
    ErrorKind kind;
    Error(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

#define SBEVLOC_DEFINE_ERROR(name, kind_)                                        \
    struct name : Error {                                                        \
        explicit name(const std::string& msg) : Error(ErrorKind::kind_, msg) {}  \
    }

// dataset_io
SBEVLOC_DEFINE_ERROR(TruncatedFile, data);
SBEVLOC_DEFINE_ERROR(NonFinite, data);
SBEVLOC_DEFINE_ERROR(ParseError, data);
SBEVLOC_DEFINE_ERROR(IoError, data);

// fast_keypoints
SBEVLOC_DEFINE_ERROR(ImageTooSmall, data);

// triplet_generation
SBEVLOC_DEFINE_ERROR(NoValidQuery, data);

// feature_extractor / losses
SBEVLOC_DEFINE_ERROR(ShapeMismatch, data);
SBEVLOC_DEFINE_ERROR(MissingCache, data);
SBEVLOC_DEFINE_ERROR(EmptyNegatives, data);
SBEVLOC_DEFINE_ERROR(DegenerateDescriptor, numeric);

// training
SBEVLOC_DEFINE_ERROR(NoScans, data);
SBEVLOC_DEFINE_ERROR(NumericalError, numeric);

// localization
SBEVLOC_DEFINE_ERROR(EmptyTrajectory, data);
SBEVLOC_DEFINE_ERROR(EmptyDatabase, data);
SBEVLOC_DEFINE_ERROR(OutOfBounds, data);
SBEVLOC_DEFINE_ERROR(TooFewCorrespondences, data);
SBEVLOC_DEFINE_ERROR(NoConsensus, data);

// evaluation
SBEVLOC_DEFINE_ERROR(EmptyResults, data);
SBEVLOC_DEFINE_ERROR(NoPositives, data);
SBEVLOC_DEFINE_ERROR(SequenceTooShort, data);

// cli / config
SBEVLOC_DEFINE_ERROR(ConfigError, usage);

#undef SBEVLOC_DEFINE_ERROR

}  // namespace sbevloc
