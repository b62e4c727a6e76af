#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefaudit/dataset.hpp"
#include "prefaudit/voting.hpp"

namespace prefaudit {

/// Four-way preference label. kUncertain is never an annotator's own label:
/// it is the majority outcome when three annotators all differ, and the
/// reviewer's "skip" in the review service.
enum class Label { kChosenBetter, kRejectedBetter, kBothGood, kBothBad, kUncertain };

inline constexpr std::array<Label, 4> kAnnotationLabels{Label::kChosenBetter, Label::kRejectedBetter,
                                                        Label::kBothGood, Label::kBothBad};

std::string_view to_string(Label label) noexcept;
std::optional<Label> parse_label(std::string_view text) noexcept;

enum class SourceTag {
  kMislabel,
  kSubjectiveQuery,
  kDifferentCriteria,
  kDifferentThresholds,
  kBothHarmful,
  kBothIrrelevant,
};

std::string_view to_string(SourceTag tag) noexcept;
std::optional<SourceTag> parse_source_tag(std::string_view text) noexcept;

/// One human judgment of one record. Annotation files and the review
/// service's decision log share this JSONL shape:
/// {record_id, annotator, label, explanation, source_tags, timestamp}.
struct AnnotationRecord {
  std::string record_id;
  std::string annotator;
  Label label = Label::kChosenBetter;
  std::string explanation;
  std::set<SourceTag> source_tags;
  std::string timestamp;  // "YYYY-MM-DDTHH:MM:SS[.fff]Z"
  long long timestamp_ms = 0;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

using ReviewDecision = AnnotationRecord;

/// Validates one JSON row. Uncertain labels are accepted only when
/// `allow_uncertain`. Errors are SchemaViolation with the message in `what`.
AnnotationRecord parse_annotation(const nlohmann::json& row, bool allow_uncertain);
nlohmann::ordered_json annotation_json(const AnnotationRecord& record);
std::string serialize_annotation(const AnnotationRecord& record);

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path,
                                               bool allow_uncertain = false);

/// Draws `per_split` ids from each (group, split) cell uniformly without
/// replacement. `per_group` must equal per_split times the number of splits.
/// Throws SampleShortfall listing every cell that is too small.
std::vector<std::string> stratified_sample(const Dataset& dataset,
                                           std::span<const VoteRecord> votes, int per_group = 40,
                                           int per_split = 20, std::uint64_t seed = 0);

/// The label given by at least two of exactly three annotators, else Uncertain.
Label majority_label(std::span<const Label> labels);

struct KappaInput {
  // counts[i][j]: raters assigning item i to category j.
  std::vector<std::vector<int>> counts;
  int raters = 0;
};

struct KappaResult {
  double kappa = 0.0;
  double observed = 0.0;  // mean per-item agreement
  double expected = 0.0;  // chance agreement
  // Every rating fell into one category, so chance agreement is 1 and the
  // statistic is undefined; kappa is reported as 1.
  bool perfect_agreement_flag = false;
};

KappaResult fleiss_kappa(const KappaInput& input);

struct CellDistribution {
  Split split = Split::kHelpful;
  Group group = Group::kNoAgree;
  std::size_t items = 0;
  // Majority-label shares in percent, keyed by all five labels.
  std::map<Label, double> shares;
  std::optional<KappaResult> kappa;
};

/// Majority-label shares and Fleiss's kappa (four categories, three raters)
/// per (split, group) cell of the annotated records.
std::vector<CellDistribution> label_distribution(const Dataset& dataset,
                                                 std::span<const VoteRecord> votes,
                                                 std::span<const AnnotationRecord> annotations);

nlohmann::ordered_json distribution_json(std::span<const CellDistribution> cells);
std::string render_distribution(std::span<const CellDistribution> cells);

}  // namespace prefaudit
