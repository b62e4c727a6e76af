#include "prefaudit/annotation.hpp"

#include <algorithm>
#include <iomanip>
#include <random>
#include <sstream>

#include "io_util.hpp"
#include "prefaudit/error.hpp"

namespace prefaudit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::kChosenBetter: return "chosen_better";
    case Label::kRejectedBetter: return "rejected_better";
    case Label::kBothGood: return "both_good";
    case Label::kBothBad: return "both_bad";
    case Label::kUncertain: return "uncertain";
  }
  return "uncertain";
}

std::optional<Label> parse_label(std::string_view text) noexcept {
  for (auto l : {Label::kChosenBetter, Label::kRejectedBetter, Label::kBothGood, Label::kBothBad,
                 Label::kUncertain}) {
    if (to_string(l) == text) return l;
  }
  return std::nullopt;
}

std::string_view to_string(SourceTag tag) noexcept {
  switch (tag) {
    case SourceTag::kMislabel: return "mislabel";
    case SourceTag::kSubjectiveQuery: return "subjective_query";
    case SourceTag::kDifferentCriteria: return "different_criteria";
    case SourceTag::kDifferentThresholds: return "different_thresholds";
    case SourceTag::kBothHarmful: return "both_harmful";
    case SourceTag::kBothIrrelevant: return "both_irrelevant";
  }
  return "mislabel";
}

std::optional<SourceTag> parse_source_tag(std::string_view text) noexcept {
  for (auto t : {SourceTag::kMislabel, SourceTag::kSubjectiveQuery, SourceTag::kDifferentCriteria,
                 SourceTag::kDifferentThresholds, SourceTag::kBothHarmful,
                 SourceTag::kBothIrrelevant}) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

AnnotationRecord parse_annotation(const json& row, bool allow_uncertain) {
  auto bad = [](const std::string& why, json details = json::object()) {
    throw Error(ErrorCode::kSchemaViolation, why, std::move(details));
  };
  if (!row.is_object()) bad("annotation must be a JSON object");

  AnnotationRecord out;
  auto text_field = [&](const char* name) -> std::optional<std::string> {
    auto it = row.find(name);
    if (it == row.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) bad(std::string("field '") + name + "' must be a string", {{"field", name}});
    return it->get<std::string>();
  };

  auto id = text_field("record_id");
  if (!id || id->empty()) bad("record_id is required", {{"field", "record_id"}});
  out.record_id = *id;

  auto annotator = text_field("annotator");
  if (!annotator) annotator = text_field("reviewer");
  if (!annotator || annotator->empty()) bad("annotator is required", {{"field", "annotator"}});
  out.annotator = *annotator;

  auto label_text = text_field("label");
  if (!label_text) bad("label is required", {{"field", "label"}});
  auto label = parse_label(*label_text);
  if (!label || (*label == Label::kUncertain && !allow_uncertain)) {
    bad("unknown label '" + *label_text + "'", {{"field", "label"}, {"value", *label_text}});
  }
  out.label = *label;

  out.explanation = text_field("explanation").value_or("");

  if (auto tags = row.find("source_tags"); tags != row.end() && !tags->is_null()) {
    if (!tags->is_array()) bad("source_tags must be an array", {{"field", "source_tags"}});
    for (const auto& t : *tags) {
      auto tag = t.is_string() ? parse_source_tag(t.get<std::string>()) : std::nullopt;
      if (!tag) bad("unknown source tag " + t.dump(), {{"field", "source_tags"}});
      out.source_tags.insert(*tag);
    }
  }

  auto timestamp = text_field("timestamp");
  if (!timestamp) bad("timestamp is required", {{"field", "timestamp"}});
  auto ms = detail::parse_timestamp_ms(*timestamp);
  if (!ms) bad("timestamp must look like 2024-01-31T12:00:00Z", {{"field", "timestamp"}});
  out.timestamp = *timestamp;
  out.timestamp_ms = *ms;
  return out;
}

ordered_json annotation_json(const AnnotationRecord& record) {
  auto tags = ordered_json::array();
  for (auto t : record.source_tags) tags.push_back(to_string(t));
  return ordered_json{{"record_id", record.record_id},
                      {"annotator", record.annotator},
                      {"label", to_string(record.label)},
                      {"explanation", record.explanation},
                      {"source_tags", std::move(tags)},
                      {"timestamp", record.timestamp}};
}

std::string serialize_annotation(const AnnotationRecord& record) {
  return annotation_json(record).dump();
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path,
                                               bool allow_uncertain) {
  std::vector<AnnotationRecord> out;
  detail::for_each_jsonl(detail::read_file(path), [&](const json& row, std::size_t line) {
    try {
      out.push_back(parse_annotation(row, allow_uncertain));
    } catch (const Error& e) {
      auto details = e.details();
      details["line"] = line;
      throw Error(e.code(), "line " + std::to_string(line) + ": " + e.what(), details);
    }
  });
  return out;
}

std::vector<std::string> stratified_sample(const Dataset& dataset,
                                           std::span<const VoteRecord> votes, int per_group,
                                           int per_split, std::uint64_t seed) {
  const int splits = static_cast<int>(kAllSplits.size());
  if (per_split < 0 || per_group != per_split * splits) {
    throw Error(ErrorCode::kInvalidArgument,
                "per_group (" + std::to_string(per_group) + ") must equal " +
                    std::to_string(splits) + " x per_split (" + std::to_string(per_split) + ")");
  }
  auto index = index_votes(votes);
  std::map<std::pair<Group, Split>, std::vector<std::string>> cells;
  for (const auto& record : dataset.records) {
    auto it = index.find(record.id);
    if (it == index.end()) {
      throw Error(ErrorCode::kMissingVote, "record '" + record.id + "' has no vote",
                  {{"record_id", record.id}});
    }
    cells[{it->second->group, record.split}].push_back(record.id);
  }

  json shortfall = json::array();
  for (auto g : kAllGroups) {
    for (auto s : kAllSplits) {
      auto have = cells[{g, s}].size();
      if (have < static_cast<std::size_t>(per_split)) {
        shortfall.push_back({{"group", to_string(g)}, {"split", to_string(s)},
                             {"available", have}, {"required", per_split}});
      }
    }
  }
  if (!shortfall.empty()) {
    throw Error(ErrorCode::kSampleShortfall,
                std::to_string(shortfall.size()) + " (group, split) cells have too few records",
                {{"cells", shortfall}});
  }

  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(per_group) * kAllGroups.size());
  for (auto g : kAllGroups) {
    for (auto s : kAllSplits) {
      auto& pool = cells[{g, s}];
      // Partial Fisher-Yates; the modulo draw keeps results identical across
      // standard libraries, unlike uniform_int_distribution.
      for (std::size_t i = 0; i < static_cast<std::size_t>(per_split); ++i) {
        auto j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
      }
    }
  }
  return out;
}

Label majority_label(std::span<const Label> labels) {
  if (labels.size() != 3) {
    throw Error(ErrorCode::kArityError,
                "majority vote needs exactly 3 labels, got " + std::to_string(labels.size()),
                {{"count", labels.size()}});
  }
  for (auto l : labels) {
    if (l == Label::kUncertain) {
      throw Error(ErrorCode::kInvalidArgument, "annotator labels cannot be 'uncertain'");
    }
  }
  for (auto l : labels) {
    if (std::count(labels.begin(), labels.end(), l) >= 2) return l;
  }
  return Label::kUncertain;
}

KappaResult fleiss_kappa(const KappaInput& input) {
  auto invalid = [](const std::string& why) { throw Error(ErrorCode::kInvalidTable, why); };
  const auto& rows = input.counts;
  const long long n = input.raters;
  if (rows.empty()) invalid("kappa table needs at least one item");
  if (n < 2) invalid("kappa needs at least two raters per item");
  const auto k = rows.front().size();
  if (k == 0) invalid("kappa table needs at least one category");

  std::vector<long long> column_totals(k, 0);
  double agreement_sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != k) invalid("row " + std::to_string(i) + " has the wrong width");
    long long row_sum = 0, squares = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const long long c = rows[i][j];
      if (c < 0) invalid("row " + std::to_string(i) + " has a negative count");
      row_sum += c;
      squares += c * c;
      column_totals[j] += c;
    }
    if (row_sum != n) {
      throw Error(ErrorCode::kInvalidTable,
                  "row " + std::to_string(i) + " sums to " + std::to_string(row_sum) +
                      ", expected " + std::to_string(n),
                  {{"row", i}, {"sum", row_sum}});
    }
    agreement_sum += static_cast<double>(squares - n) / static_cast<double>(n * (n - 1));
  }

  const double items = static_cast<double>(rows.size());
  const double ratings = items * static_cast<double>(n);
  KappaResult out;
  out.observed = agreement_sum / items;
  for (auto total : column_totals) {
    const double p = static_cast<double>(total) / ratings;
    out.expected += p * p;
  }
  if (out.expected >= 1.0) {
    out.perfect_agreement_flag = true;
    out.kappa = 1.0;
    return out;
  }
  out.kappa = (out.observed - out.expected) / (1.0 - out.expected);
  return out;
}

std::vector<CellDistribution> label_distribution(const Dataset& dataset,
                                                 std::span<const VoteRecord> votes,
                                                 std::span<const AnnotationRecord> annotations) {
  std::map<std::string, std::vector<Label>> by_record;
  for (const auto& a : annotations) {
    if (a.label == Label::kUncertain) {
      throw Error(ErrorCode::kSchemaViolation,
                  "annotation for '" + a.record_id + "' uses 'uncertain'",
                  {{"record_id", a.record_id}});
    }
    by_record[a.record_id].push_back(a.label);
  }

  json incomplete = json::array();
  for (const auto& [id, labels] : by_record) {
    if (labels.size() != 3) incomplete.push_back({{"record_id", id}, {"count", labels.size()}});
  }
  if (!incomplete.empty()) {
    throw Error(ErrorCode::kIncompleteAnnotations,
                std::to_string(incomplete.size()) + " records do not have exactly 3 annotations",
                {{"records", incomplete}});
  }

  auto vote_index = index_votes(votes);
  std::map<std::string_view, const PreferenceRecord*> record_index;
  for (const auto& r : dataset.records) record_index.emplace(r.id, &r);

  std::map<std::pair<Split, Group>, std::vector<const std::vector<Label>*>> cells;
  for (const auto& [id, labels] : by_record) {
    auto rec = record_index.find(id);
    if (rec == record_index.end()) {
      throw Error(ErrorCode::kUnknownRecord, "annotated record '" + id + "' is not in the dataset",
                  {{"record_id", id}});
    }
    auto v = vote_index.find(id);
    if (v == vote_index.end()) {
      throw Error(ErrorCode::kMissingVote, "annotated record '" + id + "' has no vote",
                  {{"record_id", id}});
    }
    cells[{rec->second->split, v->second->group}].push_back(&labels);
  }

  std::vector<CellDistribution> out;
  for (const auto& [key, items] : cells) {
    CellDistribution cell;
    cell.split = key.first;
    cell.group = key.second;
    cell.items = items.size();
    std::map<Label, std::size_t> majority_counts;
    KappaInput table;
    table.raters = 3;
    for (const auto* labels : items) {
      ++majority_counts[majority_label(*labels)];
      std::vector<int> row(kAnnotationLabels.size(), 0);
      for (auto l : *labels) ++row[static_cast<std::size_t>(l)];
      table.counts.push_back(std::move(row));
    }
    for (auto l : {Label::kChosenBetter, Label::kRejectedBetter, Label::kBothGood, Label::kBothBad,
                   Label::kUncertain}) {
      cell.shares[l] = 100.0 * static_cast<double>(majority_counts[l]) /
                       static_cast<double>(cell.items);
    }
    cell.kappa = fleiss_kappa(table);
    out.push_back(std::move(cell));
  }
  return out;
}

ordered_json distribution_json(std::span<const CellDistribution> cells) {
  auto out = ordered_json::array();
  for (const auto& c : cells) {
    ordered_json shares;
    for (const auto& [label, share] : c.shares) shares[std::string(to_string(label))] = share;
    ordered_json row{{"split", to_string(c.split)},
                     {"group", to_string(c.group)},
                     {"items", c.items},
                     {"shares", std::move(shares)}};
    if (c.kappa) {
      row["kappa"] = c.kappa->kappa;
      row["perfect_agreement_flag"] = c.kappa->perfect_agreement_flag;
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string render_distribution(std::span<const CellDistribution> cells) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "Split" << std::setw(11) << "Group" << std::right
      << std::setw(5) << "n" << std::setw(9) << "Chosen" << std::setw(10) << "Rejected"
      << std::setw(10) << "BothGood" << std::setw(9) << "BothBad" << std::setw(11) << "Uncertain"
      << std::setw(9) << "kappa" << '\n';
  for (const auto& c : cells) {
    out << std::left << std::setw(10) << to_string(c.split) << std::setw(11) << to_string(c.group)
        << std::right << std::setw(5) << c.items;
    const int widths[] = {9, 10, 10, 9, 11};
    int w = 0;
    for (auto l : {Label::kChosenBetter, Label::kRejectedBetter, Label::kBothGood, Label::kBothBad,
                   Label::kUncertain}) {
      out << std::setw(widths[w++]) << detail::format_fixed(c.shares.at(l), 1);
    }
    if (c.kappa) {
      out << std::setw(9) << detail::format_fixed(c.kappa->kappa, 4);
      if (c.kappa->perfect_agreement_flag) out << " (single category)";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace prefaudit
