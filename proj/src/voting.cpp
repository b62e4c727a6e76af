#include "prefaudit/voting.hpp"

#include <iomanip>
#include <sstream>

#include "io_util.hpp"
#include "prefaudit/error.hpp"

namespace prefaudit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Group group) noexcept {
  switch (group) {
    case Group::kNoAgree: return "NoAgree";
    case Group::kLowAgree: return "LowAgree";
    case Group::kHighAgree: return "HighAgree";
    case Group::kAllAgree: return "AllAgree";
  }
  return "NoAgree";
}

std::optional<Group> parse_group(std::string_view text) noexcept {
  for (auto g : kAllGroups) {
    if (to_string(g) == text) return g;
  }
  return std::nullopt;
}

Group group(int v, int committee_size) {
  if (committee_size < 2 || v < 0 || v > committee_size) {
    throw Error(ErrorCode::kOutOfRange,
                "vote " + std::to_string(v) + " with committee of " +
                    std::to_string(committee_size) + " is out of range",
                {{"v", v}, {"committee_size", committee_size}});
  }
  if (v == 0) return Group::kNoAgree;
  if (v == committee_size) return Group::kAllAgree;
  return v <= committee_size / 2 - 1 ? Group::kLowAgree : Group::kHighAgree;
}

VoteRecord vote(const ScoreMatrix& matrix, std::string_view record_id) {
  const auto& row = matrix.row(record_id);
  VoteRecord out;
  out.record_id = std::string(record_id);
  out.agreements.reserve(row.size());
  for (const auto& pair : row) {
    bool a = agree(pair.chosen, pair.rejected);
    out.agreements.push_back(a);
    out.v += a ? 1 : 0;
    out.ties += pair.chosen == pair.rejected ? 1 : 0;
  }
  out.group = group(out.v, static_cast<int>(row.size()));
  return out;
}

std::vector<VoteRecord> vote_all(const ScoreMatrix& matrix, const Dataset& dataset) {
  std::vector<VoteRecord> out;
  out.reserve(dataset.size());
  for (const auto& record : dataset.records) out.push_back(vote(matrix, record.id));
  return out;
}

std::map<std::string, const VoteRecord*> index_votes(std::span<const VoteRecord> votes) {
  std::map<std::string, const VoteRecord*> index;
  for (const auto& v : votes) {
    if (!index.emplace(v.record_id, &v).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate vote for '" + v.record_id + "'",
                  {{"record_id", v.record_id}});
    }
  }
  return index;
}

std::string serialize_votes(std::span<const VoteRecord> votes) {
  std::string out;
  for (const auto& v : votes) {
    auto bits = ordered_json::array();
    for (bool a : v.agreements) bits.push_back(a ? 1 : 0);
    out += ordered_json{{"record_id", v.record_id},
                        {"agreements", std::move(bits)},
                        {"v", v.v},
                        {"group", to_string(v.group)}}
               .dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<VoteRecord> load_votes(const std::filesystem::path& path) {
  std::vector<VoteRecord> out;
  detail::for_each_jsonl(detail::read_file(path), [&](const json& row, std::size_t line) {
    auto bad = [&](const std::string& why) {
      throw Error(ErrorCode::kSchemaViolation, "line " + std::to_string(line) + ": " + why,
                  {{"line", line}});
    };
    VoteRecord v;
    v.record_id = detail::require_string(row, "record_id", line);
    if (!row.contains("agreements") || !row["agreements"].is_array()) bad("agreements missing");
    for (const auto& bit : row["agreements"]) {
      if (!bit.is_number_integer() || (bit != 0 && bit != 1)) bad("agreements must be 0/1");
      v.agreements.push_back(bit == 1);
      v.v += bit == 1 ? 1 : 0;
    }
    if (row.value("v", -1) != v.v) bad("v does not equal the sum of agreements");
    v.group = group(v.v, v.committee_size());
    if (row.contains("group") && row["group"] != to_string(v.group)) bad("group does not match v");
    out.push_back(std::move(v));
  });
  return out;
}

double GroupRow::percent(Group g) const noexcept {
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(counts[static_cast<std::size_t>(g)]) /
         static_cast<double>(total);
}

GroupStats group_stats(const Dataset& dataset, std::span<const VoteRecord> votes) {
  auto index = index_votes(votes);
  GroupStats stats;
  for (auto s : kAllSplits) stats.splits[s] = {};
  for (const auto& record : dataset.records) {
    auto it = index.find(record.id);
    if (it == index.end()) {
      throw Error(ErrorCode::kMissingVote, "record '" + record.id + "' has no vote",
                  {{"record_id", record.id}});
    }
    const auto& v = *it->second;
    if (stats.committee_size == 0) stats.committee_size = v.committee_size();
    auto g = static_cast<std::size_t>(v.group);
    auto& row = stats.splits[record.split];
    ++row.counts[g];
    ++row.total;
    ++stats.overall.counts[g];
    ++stats.overall.total;
  }
  return stats;
}

std::vector<std::pair<std::string, std::size_t>> scorer_ties(const ScoreMatrix& matrix) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& s : matrix.scorers) out.emplace_back(s.name, 0);
  for (const auto& [id, row] : matrix.entries) {
    for (std::size_t j = 0; j < row.size() && j < out.size(); ++j) {
      if (row[j].chosen == row[j].rejected) ++out[j].second;
    }
  }
  return out;
}

namespace {

ordered_json row_json(const GroupRow& row) {
  ordered_json out;
  out["n"] = row.total;
  for (auto g : kAllGroups) {
    ordered_json cell;
    cell["count"] = row.counts[static_cast<std::size_t>(g)];
    cell["percent"] = row.total == 0 ? json(nullptr) : json(row.percent(g));
    out[std::string(to_string(g))] = std::move(cell);
  }
  return out;
}

}  // namespace

ordered_json GroupStats::to_json() const {
  ordered_json out;
  out["committee_size"] = committee_size;
  out["columns"] = {"NoAgree", "LowAgree", "HighAgree", "AllAgree"};
  ordered_json rows;
  for (const auto& [split, row] : splits) rows[std::string(to_string(split))] = row_json(row);
  rows["Total"] = row_json(overall);
  out["rows"] = std::move(rows);
  ordered_json ties = ordered_json::object();
  for (const auto& [name, count] : scorer_ties) ties[name] = count;
  out["scorer_ties"] = std::move(ties);
  return out;
}

std::string GroupStats::render() const {
  std::ostringstream out;
  constexpr int kSplitWidth = 10;
  constexpr int kCellWidth = 11;
  out << std::left << std::setw(kSplitWidth) << "Split";
  for (auto g : kAllGroups) out << std::right << std::setw(kCellWidth) << to_string(g);
  out << '\n';
  auto line = [&](std::string_view name, const GroupRow& row) {
    out << std::left << std::setw(kSplitWidth) << name;
    for (auto g : kAllGroups) {
      if (row.total == 0) {
        // setw counts bytes; the dash is three.
        out << std::string(kCellWidth - 1, ' ') << "—";
      } else {
        out << std::right << std::setw(kCellWidth) << detail::format_fixed(row.percent(g), 2) + "%";
      }
    }
    out << '\n';
  };
  for (const auto& [split, row] : splits) line(to_string(split), row);
  line("Total", overall);
  return out.str();
}

VoteHistogram vote_histogram(const Dataset& dataset, std::span<const VoteRecord> votes) {
  auto index = index_votes(votes);
  VoteHistogram histogram;
  for (const auto& record : dataset.records) {
    auto it = index.find(record.id);
    if (it == index.end()) {
      throw Error(ErrorCode::kMissingVote, "record '" + record.id + "' has no vote",
                  {{"record_id", record.id}});
    }
    ++histogram[record.split][it->second->v];
  }
  return histogram;
}

json histogram_json(const VoteHistogram& histogram) {
  json out = json::object();
  for (const auto& [split, counts] : histogram) {
    json row = json::object();
    for (const auto& [v, count] : counts) row[std::to_string(v)] = count;
    out[std::string(to_string(split))] = std::move(row);
  }
  return out;
}

}  // namespace prefaudit
