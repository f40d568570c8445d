#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctprep {

enum class ErrorCode {
  // dicom
  MissingPixelData,
  UnsupportedTransferSyntax,
  TruncatedFile,
  MalformedElement,
  InconsistentGeometry,
  NotDicom,
  // volume / nifti
  SingleSliceNoSpacing,
  UnsupportedVariant,
  IoFailure,
  // triage
  DegenerateOrientation,
  // registration
  NonConvergence,
  DegenerateVolume,
  // reg_qc
  TooFewSamples,
  EmNonConvergence,
  UndecidedCluster,
  // standardize
  NoHeadFound,
  // pipeline
  CorruptManifest,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingPixelData: return "MissingPixelData";
    case ErrorCode::UnsupportedTransferSyntax: return "UnsupportedTransferSyntax";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::MalformedElement: return "MalformedElement";
    case ErrorCode::InconsistentGeometry: return "InconsistentGeometry";
    case ErrorCode::NotDicom: return "NotDicom";
    case ErrorCode::SingleSliceNoSpacing: return "SingleSliceNoSpacing";
    case ErrorCode::UnsupportedVariant: return "UnsupportedVariant";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::DegenerateOrientation: return "DegenerateOrientation";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::DegenerateVolume: return "DegenerateVolume";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::EmNonConvergence: return "EmNonConvergence";
    case ErrorCode::UndecidedCluster: return "UndecidedCluster";
    case ErrorCode::NoHeadFound: return "NoHeadFound";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the pipeline in particular) can record it per scan without
/// string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ctprep
