#include "motionrag/errors.hpp"

namespace motionrag {

const char* err_name(Err e) {
  switch (e) {
    case Err::EnvelopeOutOfBounds: return "EnvelopeOutOfBounds";
    case Err::ManifestCorrupt: return "ManifestCorrupt";
    case Err::FrameShapeMismatch: return "FrameShapeMismatch";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::EmptyDatabase: return "EmptyDatabase";
    case Err::VersionMismatch: return "VersionMismatch";
    case Err::CorruptIndex: return "CorruptIndex";
    case Err::EmptyAfterExclusion: return "EmptyAfterExclusion";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::EmptyContext: return "EmptyContext";
    case Err::StepOutOfRange: return "StepOutOfRange";
    case Err::CorpusTooSmall: return "CorpusTooSmall";
    case Err::IndexMissing: return "IndexMissing";
    case Err::CheckpointMismatch: return "CheckpointMismatch";
    case Err::OracleUnavailable: return "OracleUnavailable";
    case Err::NoForeground: return "NoForeground";
    case Err::IoFailure: return "IoFailure";
    case Err::ConfigInvalid: return "ConfigInvalid";
  }
  return "UnknownError";
}

}  // namespace motionrag
