#pragma once

#include <stdexcept>
#include <string>

namespace motionrag {

enum class Err {
  EnvelopeOutOfBounds,
  ManifestCorrupt,
  FrameShapeMismatch,
  DimensionMismatch,
  EmptyDatabase,
  VersionMismatch,
  CorruptIndex,
  EmptyAfterExclusion,
  ShapeMismatch,
  EmptyContext,
  StepOutOfRange,
  CorpusTooSmall,
  IndexMissing,
  CheckpointMismatch,
  OracleUnavailable,
  NoForeground,
  IoFailure,
  ConfigInvalid,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void raise(Err code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Err code, const std::string& msg) {
  if (!cond) raise(code, msg);
}

}  // namespace motionrag
