#include "prefaudit/error.hpp"

namespace prefaudit {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kMalformedTranscript: return "MalformedTranscript";
    case ErrorCode::kDivergenceNotAtTail: return "DivergenceNotAtTail";
    case ErrorCode::kRoleMismatch: return "RoleMismatch";
    case ErrorCode::kIdenticalResponses: return "IdenticalResponses";
    case ErrorCode::kScorerUnavailable: return "ScorerUnavailable";
    case ErrorCode::kNonFiniteScore: return "NonFiniteScore";
    case ErrorCode::kMissingEntry: return "MissingEntry";
    case ErrorCode::kJudgeParseError: return "JudgeParseError";
    case ErrorCode::kJudgeRangeError: return "JudgeRangeError";
    case ErrorCode::kEndpointError: return "EndpointError";
    case ErrorCode::kUnknownScorer: return "UnknownScorer";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kMissingVote: return "MissingVote";
    case ErrorCode::kUnknownStrategy: return "UnknownStrategy";
    case ErrorCode::kMissingAux: return "MissingAux";
    case ErrorCode::kActionCoverageGap: return "ActionCoverageGap";
    case ErrorCode::kUnknownRecord: return "UnknownRecord";
    case ErrorCode::kSampleShortfall: return "SampleShortfall";
    case ErrorCode::kArityError: return "ArityError";
    case ErrorCode::kInvalidTable: return "InvalidTable";
    case ErrorCode::kIncompleteAnnotations: return "IncompleteAnnotations";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kScoreBuildFailed: return "ScoreBuildFailed";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

nlohmann::json Error::to_json() const {
  return nlohmann::json{{"error", std::string(error_code_name(code_))},
                        {"code", static_cast<int>(code_)},
                        {"message", what()},
                        {"details", details_}};
}

}  // namespace prefaudit
