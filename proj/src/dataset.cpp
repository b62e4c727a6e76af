#include "prefaudit/dataset.hpp"

#include <algorithm>
#include <unordered_set>

#include "io_util.hpp"
#include "prefaudit/error.hpp"

namespace prefaudit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Role role) noexcept {
  return role == Role::kHuman ? "human" : "assistant";
}

std::string_view to_string(Split split) noexcept {
  return split == Split::kHarmless ? "harmless" : "helpful";
}

std::optional<Role> parse_role(std::string_view text) noexcept {
  if (text == "human") return Role::kHuman;
  if (text == "assistant") return Role::kAssistant;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view text) noexcept {
  if (text == "harmless") return Split::kHarmless;
  if (text == "helpful") return Split::kHelpful;
  return std::nullopt;
}

MarkerStyle MarkerStyle::hh() { return {"\n\nHuman:", "\n\nAssistant:"}; }

MarkerStyle MarkerStyle::hashes() { return {"###Human:", "###Assistant:"}; }

MarkerStyle MarkerStyle::from_name(std::string_view name) {
  if (name == "hh") return hh();
  if (name == "hash" || name == "###") return hashes();
  throw Error(ErrorCode::kInvalidArgument,
              "unknown marker style '" + std::string(name) + "' (expected hh or hash)");
}

bool PreferenceRecord::allows_identical() const {
  auto it = meta.find(std::string(kMetaAllowIdentical));
  return it != meta.end() && it->second == "true";
}

namespace {

std::string_view strip_leading_space(std::string_view marker) {
  auto first = marker.find_first_not_of(" \t\r\n");
  return first == std::string_view::npos ? std::string_view{} : marker.substr(first);
}

// Offset at which a marker found (without its leading whitespace) at `pos`
// actually begins in `raw`.
std::size_t marker_origin(std::string_view raw, std::size_t pos, std::string_view marker) {
  auto lead = marker.size() - strip_leading_space(marker).size();
  if (pos >= lead && raw.substr(pos - lead, lead) == marker.substr(0, lead)) return pos - lead;
  return pos;
}

[[noreturn]] void malformed(std::size_t offset, const std::string& why) {
  throw Error(ErrorCode::kMalformedTranscript,
              "malformed transcript at offset " + std::to_string(offset) + ": " + why,
              {{"offset", offset}});
}

}  // namespace

std::vector<Turn> parse_transcript(std::string_view raw, const MarkerStyle& markers) {
  if (markers.human.empty() || markers.assistant.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "marker strings must be non-empty");
  }
  const auto start = raw.find_first_not_of(" \t\r\n");
  if (start == std::string_view::npos) malformed(0, "no leading human marker");

  const auto human_lead = strip_leading_space(markers.human);
  const auto assistant_lead = strip_leading_space(markers.assistant);
  const auto rest = raw.substr(start);
  if (!rest.starts_with(human_lead)) {
    if (rest.starts_with(assistant_lead)) {
      malformed(marker_origin(raw, start, markers.assistant), "transcript opens with assistant");
    }
    malformed(start, "no leading human marker");
  }

  std::vector<Turn> turns;
  Role role = Role::kHuman;
  std::size_t cursor = start + human_lead.size();
  while (true) {
    auto next_human = raw.find(markers.human, cursor);
    auto next_assistant = raw.find(markers.assistant, cursor);
    auto next = std::min(next_human, next_assistant);
    auto end = next == std::string_view::npos ? raw.size() : next;
    turns.push_back({role, std::string(detail::trim(raw.substr(cursor, end - cursor)))});
    if (next == std::string_view::npos) break;

    Role next_role = next == next_human ? Role::kHuman : Role::kAssistant;
    if (next_role == role) {
      malformed(next, "two consecutive " + std::string(to_string(role)) + " markers");
    }
    role = next_role;
    cursor = next + (role == Role::kHuman ? markers.human.size() : markers.assistant.size());
  }
  return turns;
}

std::string render_transcript(std::span<const Turn> turns, const MarkerStyle& markers) {
  std::string out;
  for (const auto& turn : turns) {
    const auto& marker = turn.role == Role::kHuman ? markers.human : markers.assistant;
    if (!out.empty() && !marker.empty() && marker.front() != '\n' && marker.front() != ' ') {
      out.push_back(' ');
    }
    out += marker;
    if (!turn.text.empty()) {
      out.push_back(' ');
      out += turn.text;
    }
  }
  return out;
}

SharedContext split_shared_context(const RawPairRow& row, const MarkerStyle& markers,
                                   bool allow_identical) {
  auto chosen = parse_transcript(row.chosen_transcript, markers);
  auto rejected = parse_transcript(row.rejected_transcript, markers);

  if (chosen.back().role != Role::kAssistant || rejected.back().role != Role::kAssistant) {
    throw Error(ErrorCode::kRoleMismatch, "both transcripts must end with an assistant turn",
                {{"chosen_turns", chosen.size()}, {"rejected_turns", rejected.size()}});
  }
  const auto common = std::min(chosen.size(), rejected.size()) - 1;
  for (std::size_t i = 0; i < common; ++i) {
    if (chosen[i] != rejected[i]) {
      throw Error(ErrorCode::kDivergenceNotAtTail,
                  "transcripts diverge at turn " + std::to_string(i + 1) + " of " +
                      std::to_string(chosen.size()),
                  {{"turn", i}});
    }
  }
  if (chosen.size() != rejected.size()) {
    throw Error(ErrorCode::kDivergenceNotAtTail,
                "transcripts have different turn counts (" + std::to_string(chosen.size()) +
                    " vs " + std::to_string(rejected.size()) + ")",
                {{"turn", common}});
  }

  SharedContext out;
  out.chosen = std::move(chosen.back().text);
  out.rejected = std::move(rejected.back().text);
  chosen.pop_back();
  out.context = std::move(chosen);
  out.identical = out.chosen == out.rejected;
  if (out.identical && !allow_identical) {
    throw Error(ErrorCode::kIdenticalResponses, "chosen and rejected responses are identical");
  }
  return out;
}

namespace {

ordered_json context_json(const std::vector<Turn>& context) {
  auto turns = ordered_json::array();
  for (const auto& turn : context) {
    turns.push_back(ordered_json{{"role", to_string(turn.role)}, {"text", turn.text}});
  }
  return turns;
}

}  // namespace

std::string content_id(const PreferenceRecord& record) {
  ordered_json key{{"split", to_string(record.split)},
                   {"context", context_json(record.context)},
                   {"chosen", record.chosen},
                   {"rejected", record.rejected}};
  return "rec-" + detail::sha256_hex(key.dump()).substr(0, 16);
}

void validate_record(const PreferenceRecord& record) {
  if (record.id.empty()) {
    throw Error(ErrorCode::kSchemaViolation, "record id is empty");
  }
  if (!record.context.empty() && record.context.back().role != Role::kHuman) {
    throw Error(ErrorCode::kSchemaViolation,
                "record " + record.id + ": context must end with a human turn",
                {{"record_id", record.id}});
  }
  if (record.chosen == record.rejected && !record.allows_identical()) {
    throw Error(ErrorCode::kSchemaViolation,
                "record " + record.id + ": chosen and rejected are identical",
                {{"record_id", record.id}});
  }
}

json LoadReport::to_json() const {
  return json{{"records", records},
              {"raw_rows", raw_rows},
              {"missing_split", missing_split},
              {"empty_assistant_turns", empty_assistant_turns},
              {"identical_pairs", identical_pairs}};
}

const PreferenceRecord* Dataset::find(std::string_view id) const {
  auto it = std::find_if(records.begin(), records.end(),
                         [&](const PreferenceRecord& r) { return r.id == id; });
  return it == records.end() ? nullptr : &*it;
}

namespace {

[[noreturn]] void schema_error(std::size_t line, const std::string& why) {
  throw Error(ErrorCode::kSchemaViolation, "line " + std::to_string(line) + ": " + why,
              {{"line", line}});
}

Split read_split(const json& row, std::size_t line, LoadReport& report) {
  auto it = row.find("split");
  if (it == row.end() || it->is_null()) {
    ++report.missing_split;
    return Split::kHelpful;
  }
  if (!it->is_string()) schema_error(line, "split must be a string");
  auto split = parse_split(it->get<std::string>());
  if (!split) schema_error(line, "unknown split value '" + it->get<std::string>() + "'");
  return *split;
}

PreferenceRecord read_normalized(const json& row, std::size_t line, LoadReport& report) {
  PreferenceRecord record;
  record.split = read_split(row, line, report);
  const auto& context = row.at("context");
  if (!context.is_array()) schema_error(line, "context must be an array");
  for (const auto& turn : context) {
    if (!turn.is_object()) schema_error(line, "context turns must be objects");
    auto role = parse_role(detail::require_string(turn, "role", line));
    if (!role) schema_error(line, "unknown turn role");
    record.context.push_back({*role, detail::require_string(turn, "text", line)});
  }
  record.chosen = detail::require_string(row, "chosen", line);
  record.rejected = detail::require_string(row, "rejected", line);
  if (auto meta = row.find("meta"); meta != row.end() && !meta->is_null()) {
    if (!meta->is_object()) schema_error(line, "meta must be an object");
    for (const auto& [key, value] : meta->items()) {
      if (!value.is_string()) schema_error(line, "meta values must be strings");
      record.meta.emplace(key, value.get<std::string>());
    }
  }
  return record;
}

PreferenceRecord read_raw(const json& row, std::size_t line, const LoadOptions& options,
                          LoadReport& report) {
  RawPairRow raw{detail::require_string(row, "chosen", line),
                 detail::require_string(row, "rejected", line)};
  if (raw.chosen_transcript.empty() || raw.rejected_transcript.empty()) {
    schema_error(line, "raw transcripts must be non-empty");
  }
  PreferenceRecord record;
  record.split = read_split(row, line, report);
  SharedContext shared;
  try {
    shared = split_shared_context(raw, options.markers, options.allow_identical);
  } catch (const Error& e) {
    auto details = e.details();
    details["line"] = line;
    throw Error(e.code(), "line " + std::to_string(line) + ": " + e.what(), details);
  }
  record.context = std::move(shared.context);
  record.chosen = std::move(shared.chosen);
  record.rejected = std::move(shared.rejected);
  if (shared.identical) {
    record.meta.emplace(kMetaAllowIdentical, "true");
    ++report.identical_pairs;
  }
  ++report.raw_rows;
  return record;
}

}  // namespace

Dataset parse_dataset(std::string_view text, const LoadOptions& options) {
  Dataset dataset;
  auto& report = dataset.report;
  std::unordered_set<std::string> seen;

  detail::for_each_jsonl(text, [&](const json& row, std::size_t line) {
    PreferenceRecord record = row.contains("context") ? read_normalized(row, line, report)
                                                      : read_raw(row, line, options, report);
    if (auto id = row.find("id"); id != row.end() && !id->is_null()) {
      if (!id->is_string() || id->get<std::string>().empty()) {
        schema_error(line, "id must be a non-empty string");
      }
      record.id = id->get<std::string>();
    } else {
      record.id = content_id(record);
    }
    if (!seen.insert(record.id).second) {
      throw Error(ErrorCode::kSchemaViolation,
                  "line " + std::to_string(line) + ": duplicate record id '" + record.id + "'",
                  {{"line", line}, {"record_id", record.id}});
    }
    try {
      validate_record(record);
    } catch (const Error& e) {
      schema_error(line, e.what());
    }
    report.empty_assistant_turns +=
        std::count_if(record.context.begin(), record.context.end(), [](const Turn& t) {
          return t.role == Role::kAssistant && t.text.empty();
        });
    dataset.records.push_back(std::move(record));
  });
  report.records = dataset.records.size();
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
  return parse_dataset(detail::read_file(path), options);
}

std::string serialize_record(const PreferenceRecord& record) {
  ordered_json meta = ordered_json::object();
  for (const auto& [key, value] : record.meta) meta[key] = value;
  ordered_json row{{"id", record.id},
                   {"split", to_string(record.split)},
                   {"context", context_json(record.context)},
                   {"chosen", record.chosen},
                   {"rejected", record.rejected},
                   {"meta", std::move(meta)}};
  return row.dump();
}

std::string serialize_dataset(std::span<const PreferenceRecord> records) {
  std::string out;
  for (const auto& record : records) {
    out += serialize_record(record);
    out.push_back('\n');
  }
  return out;
}

void save_dataset(std::span<const PreferenceRecord> records, const std::filesystem::path& path) {
  detail::write_file(path, serialize_dataset(records));
}

}  // namespace prefaudit
