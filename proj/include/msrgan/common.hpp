#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace msrgan {

/// Scalar type of the whole numeric stack. Double keeps finite-difference
/// gradient checks and metric oracles honest at tight tolerances.
using real = double;

/// Base class for every failure the library can surface. The CLI maps these
/// to exit code 2 (input errors) or 3 (numeric failures).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error { using Error::Error; };
struct MissingPixelData : Error { using Error::Error; };
struct DegenerateWindow : Error { using Error::Error; };
struct WrongShape : Error { using Error::Error; };
struct WrongInputShape : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct ScaleMismatch : Error { using Error::Error; };
struct TooFewPatients : Error { using Error::Error; };
struct EmptyClass : Error { using Error::Error; };
struct EmptyManifest : Error { using Error::Error; };
struct UnknownTap : Error { using Error::Error; };
struct WeightsNotLoaded : Error { using Error::Error; };
struct ChecksumMismatch : Error { using Error::Error; };
struct ArchitectureMismatch : Error { using Error::Error; };
struct CheckpointMismatch : Error { using Error::Error; };
struct TooSmall : Error { using Error::Error; };
struct ZeroDenominator : Error { using Error::Error; };
struct DataExhausted : Error { using Error::Error; };

} // namespace msrgan
