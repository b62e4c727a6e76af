#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace prefaudit {

enum class Role { kHuman, kAssistant };
enum class Split { kHarmless, kHelpful };

std::string_view to_string(Role role) noexcept;
std::string_view to_string(Split split) noexcept;
std::optional<Role> parse_role(std::string_view text) noexcept;
std::optional<Split> parse_split(std::string_view text) noexcept;

struct Turn {
  Role role = Role::kHuman;
  std::string text;

  friend bool operator==(const Turn&, const Turn&) = default;
};

/// Speaker markers used to interleave turns in a raw transcript. The trailing
/// space conventionally written after a marker is not part of the marker.
struct MarkerStyle {
  std::string human;
  std::string assistant;

  /// "\n\nHuman:" / "\n\nAssistant:" as in the public HH files.
  static MarkerStyle hh();
  /// "###Human:" / "###Assistant:" as used in judge prompts.
  static MarkerStyle hashes();
  /// Accepts "hh" or "hash"; throws InvalidArgument otherwise.
  static MarkerStyle from_name(std::string_view name);
};

// Meta keys with library-defined meaning.
inline constexpr std::string_view kMetaAllowIdentical = "allow_identical";
inline constexpr std::string_view kMetaFlipped = "flipped";

struct PreferenceRecord {
  std::string id;
  Split split = Split::kHelpful;
  std::vector<Turn> context;
  std::string chosen;
  std::string rejected;
  std::map<std::string, std::string> meta;

  bool allows_identical() const;

  friend bool operator==(const PreferenceRecord&, const PreferenceRecord&) = default;
};

struct RawPairRow {
  std::string chosen_transcript;
  std::string rejected_transcript;
};

/// Splits `raw` into alternating human/assistant turns, starting with human.
/// Turn texts are whitespace-trimmed; a trailing marker with no text yields an
/// empty assistant turn. Throws MalformedTranscript with the byte offset.
std::vector<Turn> parse_transcript(std::string_view raw, const MarkerStyle& markers);

/// Inverse of parse_transcript modulo whitespace normalization: every turn is
/// written as marker + " " + text.
std::string render_transcript(std::span<const Turn> turns, const MarkerStyle& markers);

struct SharedContext {
  std::vector<Turn> context;
  std::string chosen;
  std::string rejected;
  bool identical = false;
};

/// Recovers (context, chosen, rejected) from two full transcripts that share
/// every turn except the final assistant one. Identical final answers are an
/// error unless `allow_identical`.
SharedContext split_shared_context(const RawPairRow& row, const MarkerStyle& markers,
                                   bool allow_identical = false);

/// Stable id derived from split, context, chosen and rejected.
std::string content_id(const PreferenceRecord& record);

/// Checks the record-level invariants; throws SchemaViolation.
void validate_record(const PreferenceRecord& record);

struct LoadOptions {
  MarkerStyle markers = MarkerStyle::hh();
  // Applies to raw {chosen, rejected} transcript rows only.
  bool allow_identical = false;
};

struct LoadReport {
  std::size_t records = 0;
  std::size_t raw_rows = 0;
  std::size_t missing_split = 0;
  // Assistant turns in a context whose text is empty.
  std::size_t empty_assistant_turns = 0;
  std::size_t identical_pairs = 0;

  nlohmann::json to_json() const;
};

struct Dataset {
  std::vector<PreferenceRecord> records;
  LoadReport report;

  std::size_t size() const noexcept { return records.size(); }
  // Linear scan; callers that need repeated lookups should build an index.
  const PreferenceRecord* find(std::string_view id) const;
};

/// Reads a JSONL dataset. Each line is either a normalized record
/// {id, split, context, chosen, rejected, meta} or a raw HH row
/// {chosen, rejected[, split, id]} holding full transcripts.
Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});
Dataset parse_dataset(std::string_view text, const LoadOptions& options = {});

void save_dataset(std::span<const PreferenceRecord> records, const std::filesystem::path& path);
std::string serialize_record(const PreferenceRecord& record);
std::string serialize_dataset(std::span<const PreferenceRecord> records);

}  // namespace prefaudit
