#pragma once

#include <stdexcept>
#include <string>

namespace oc3d {

// Failure categories used across the library. The CLI maps these onto
// process exit codes; library code throws and never calls exit().
enum class Err {
  InvalidParams,
  GimbalLock,
  ZeroVector,
  DegeneratePlane,
  DegenerateUp,
  UnusableBundle,
  InsufficientCorrespondences,
  InsufficientData,
  Parse,
  Shape,
  Io,
  CorruptFile,
  MissingArtifact,
  SingleClass,
  LengthMismatch,
  NumericFailure,
};

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Err code() const noexcept { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) { throw Error(code, what); }

inline const char* err_name(Err e) {
  switch (e) {
    case Err::InvalidParams: return "InvalidParams";
    case Err::GimbalLock: return "GimbalLock";
    case Err::ZeroVector: return "ZeroVector";
    case Err::DegeneratePlane: return "DegeneratePlane";
    case Err::DegenerateUp: return "DegenerateUp";
    case Err::UnusableBundle: return "UnusableBundle";
    case Err::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case Err::InsufficientData: return "InsufficientData";
    case Err::Parse: return "Parse";
    case Err::Shape: return "Shape";
    case Err::Io: return "Io";
    case Err::CorruptFile: return "CorruptFile";
    case Err::MissingArtifact: return "MissingArtifact";
    case Err::SingleClass: return "SingleClass";
    case Err::LengthMismatch: return "LengthMismatch";
    case Err::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

}  // namespace oc3d
