#pragma once

#include <stdexcept>
#include <string>

namespace eegalign {

// Failure taxonomy shared by every module. The CLI maps kNumerical to
// exit code 2 (runtime abort) and everything else to exit code 1.
enum class ErrorKind {
  kFormat,           // malformed or missing file content
  kCorruption,       // byte counts / checksums disagree with the manifest
  kValidation,       // inputs violate a documented precondition
  kRange,            // window or scalar outside the legal range
  kUnsupportedRate,  // non-integer resampling ratio
  kShape,            // tensor dimension mismatch
  kNumerical,        // singular matrices, non-finite losses
  kSampling,         // draw size exceeds the slot pool
  kLookup,           // unknown concept/image key
  kCoverage,         // a required vector or concept is missing from a bank
  kAlignment,        // banks disagree on item keys or order
  kNormalization,    // zero vector cannot be unit-normalized
  kAmbiguity,        // more than one candidate where exactly one is allowed
  kEmptyConcept,     // a concept carries no usable trials or vectors
  kDegenerateInput,  // statistic undefined (e.g. all paired differences zero)
  kPairing,          // paired comparison could not match reports one-to-one
  kHoldoutRule,      // holdout rule inapplicable (too few images)
  kEstimation,       // estimator preconditions unmet (no repeated stimuli)
  kConfig,           // inconsistent or unknown configuration
  kDesign,           // experiment grid varies an uncontrolled factor
  kIo,               // filesystem failure
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kCorruption: return "corruption";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kUnsupportedRate: return "unsupported-rate";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kSampling: return "sampling";
    case ErrorKind::kLookup: return "lookup";
    case ErrorKind::kCoverage: return "coverage";
    case ErrorKind::kAlignment: return "alignment";
    case ErrorKind::kNormalization: return "normalization";
    case ErrorKind::kAmbiguity: return "ambiguity";
    case ErrorKind::kEmptyConcept: return "empty-concept";
    case ErrorKind::kDegenerateInput: return "degenerate-input";
    case ErrorKind::kPairing: return "pairing";
    case ErrorKind::kHoldoutRule: return "holdout-rule";
    case ErrorKind::kEstimation: return "estimation";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kDesign: return "design";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool ok, ErrorKind kind, const std::string& message) {
  if (!ok) fail(kind, message);
}

}  // namespace eegalign
