#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace prefaudit {

// Keep in sync with pa_status in prefaudit.h; the C layer casts directly.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kIo = 2,
  kSchemaViolation = 3,
  kMalformedTranscript = 4,
  kDivergenceNotAtTail = 5,
  kRoleMismatch = 6,
  kIdenticalResponses = 7,
  kScorerUnavailable = 8,
  kNonFiniteScore = 9,
  kMissingEntry = 10,
  kJudgeParseError = 11,
  kJudgeRangeError = 12,
  kEndpointError = 13,
  kUnknownScorer = 14,
  kOutOfRange = 15,
  kMissingVote = 16,
  kUnknownStrategy = 17,
  kMissingAux = 18,
  kActionCoverageGap = 19,
  kUnknownRecord = 20,
  kSampleShortfall = 21,
  kArityError = 22,
  kInvalidTable = 23,
  kIncompleteAnnotations = 24,
  kEmptyInput = 25,
  kScoreBuildFailed = 26,
  kInternal = 99,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Every failure raised by the library. `details` carries the structured
/// payload (offsets, line numbers, record ids) that the CLI can emit as JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& details() const noexcept { return details_; }

  nlohmann::json to_json() const;

 private:
  ErrorCode code_;
  nlohmann::json details_;
};

}  // namespace prefaudit
