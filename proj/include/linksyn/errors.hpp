#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>
#include <string_view>

namespace linksyn {

enum class Errc {
  kMalformedLine,
  kUnknownDiscipline,
  kDuplicateId,
  kEmptyKpSet,
  kEmptyCorpus,
  kEmptyGraph,
  kUnknownKp,
  kCorruptFile,
  kIoError,
  kDimensionMismatch,
  kSupportViolation,
  kInsufficientPaths,
  kRetryBudgetExhausted,
  kNoCandidate,
  kArityMismatch,
  kBackendUnavailable,
  kRateLimited,
  kParseFailure,
  kSummarizerUnavailable,
  kEmbedderUnavailable,
  kConfigInvalid,
  kInvalidArgument,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kMalformedLine: return "MalformedLine";
    case Errc::kUnknownDiscipline: return "UnknownDiscipline";
    case Errc::kDuplicateId: return "DuplicateId";
    case Errc::kEmptyKpSet: return "EmptyKpSet";
    case Errc::kEmptyCorpus: return "EmptyCorpus";
    case Errc::kEmptyGraph: return "EmptyGraph";
    case Errc::kUnknownKp: return "UnknownKp";
    case Errc::kCorruptFile: return "CorruptFile";
    case Errc::kIoError: return "IoError";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kSupportViolation: return "SupportViolation";
    case Errc::kInsufficientPaths: return "InsufficientPaths";
    case Errc::kRetryBudgetExhausted: return "RetryBudgetExhausted";
    case Errc::kNoCandidate: return "NoCandidate";
    case Errc::kArityMismatch: return "ArityMismatch";
    case Errc::kBackendUnavailable: return "BackendUnavailable";
    case Errc::kRateLimited: return "RateLimited";
    case Errc::kParseFailure: return "ParseFailure";
    case Errc::kSummarizerUnavailable: return "SummarizerUnavailable";
    case Errc::kEmbedderUnavailable: return "EmbedderUnavailable";
    case Errc::kConfigInvalid: return "ConfigInvalid";
    case Errc::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// Every failure raised by the library. `line()` is 1-based and 0 when the
// error is not tied to an input line.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::size_t line = 0)
      : std::runtime_error(format(code, message, line)), code_(code), line_(line) {}

  Errc code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(Errc code, const std::string& message, std::size_t line) {
    std::string out(errc_name(code));
    if (line != 0) out += " (line " + std::to_string(line) + ")";
    out += ": ";
    out += message;
    return out;
  }

  Errc code_;
  std::size_t line_;
};

// ConfigInvalid carrying every problem found, not just the first.
class ConfigError : public Error {
 public:
  ConfigError(std::vector<std::string> problems, const std::string& message)
      : Error(Errc::kConfigInvalid, message), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

}  // namespace linksyn
