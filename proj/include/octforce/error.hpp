#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace octforce {

enum class ErrorKind {
  InvalidInput,
  PhysicalContact,
  Config,
  UnsupportedLength,
  Shape,
  NoPeak,
  DegenerateFit,
  Format,
  Io,
  RepresentationMismatch,
  NonFinite,
  Contract,
  MissingDataset,
  UninitializedStats,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::PhysicalContact: return "physical-contact";
    case ErrorKind::Config: return "config";
    case ErrorKind::UnsupportedLength: return "unsupported-length";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::NoPeak: return "no-peak";
    case ErrorKind::DegenerateFit: return "degenerate-fit";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::RepresentationMismatch: return "representation-mismatch";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::MissingDataset: return "missing-dataset";
    case ErrorKind::UninitializedStats: return "uninitialized-stats";
  }
  return "unknown";
}

/// Every failure raised by the library carries a category so the CLI can map
/// it to a distinct exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace octforce
