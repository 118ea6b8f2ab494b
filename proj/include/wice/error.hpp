#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wice {

enum class ErrorCode {
  MalformedDocument,
  NoImage,
  NoReferenceText,
  UnknownNode,
  EmptyText,
  MissingEmbedding,
  DimensionMismatch,
  ProviderMismatch,
  ZeroVector,
  NoTextNodes,
  NoTitle,
  NonFiniteGradient,
  EmptyCorpus,
  EmptySet,
  DegenerateVariance,
  MissingPrerequisite,
  BadFormat,
  ProvenanceMismatch,
  InvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::NoImage: return "NoImage";
    case ErrorCode::NoReferenceText: return "NoReferenceText";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ProviderMismatch: return "ProviderMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NoTextNodes: return "NoTextNodes";
    case ErrorCode::NoTitle: return "NoTitle";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::MissingPrerequisite: return "MissingPrerequisite";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::ProvenanceMismatch: return "ProvenanceMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code.
/// Per-page codes (NoImage, NoTextNodes, ...) are usually caught by the
/// caller and counted rather than propagated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wice
