#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefaudit/dataset.hpp"
#include "prefaudit/scoring.hpp"

namespace prefaudit {

enum class Group { kNoAgree, kLowAgree, kHighAgree, kAllAgree };

inline constexpr std::array<Group, 4> kAllGroups{Group::kNoAgree, Group::kLowAgree,
                                                 Group::kHighAgree, Group::kAllAgree};
inline constexpr std::array<Split, 2> kAllSplits{Split::kHarmless, Split::kHelpful};

std::string_view to_string(Group group) noexcept;
std::optional<Group> parse_group(std::string_view text) noexcept;

/// 1 iff the scorer strictly prefers the chosen response. Ties disagree.
inline bool agree(double reward_chosen, double reward_rejected) noexcept {
  return reward_chosen > reward_rejected;
}

/// Buckets a vote score: {0}, [1, M/2 - 1], [M/2, M - 1], {M}. For M = 8 this is
/// {0}, 1-3, 4-7, {8}. Throws OutOfRange unless 0 <= v <= M and M >= 2.
Group group(int v, int committee_size);

struct VoteRecord {
  std::string record_id;
  std::vector<bool> agreements;
  int v = 0;
  Group group = Group::kNoAgree;
  // Scorers that gave both responses the same reward.
  int ties = 0;

  int committee_size() const noexcept { return static_cast<int>(agreements.size()); }
};

VoteRecord vote(const ScoreMatrix& matrix, std::string_view record_id);

/// Votes for every dataset record, in dataset order.
std::vector<VoteRecord> vote_all(const ScoreMatrix& matrix, const Dataset& dataset);

/// Votes keyed by record id. Duplicate ids throw InvalidArgument.
std::map<std::string, const VoteRecord*> index_votes(std::span<const VoteRecord> votes);

std::string serialize_votes(std::span<const VoteRecord> votes);
std::vector<VoteRecord> load_votes(const std::filesystem::path& path);

struct GroupRow {
  std::array<std::size_t, 4> counts{};
  std::size_t total = 0;

  double percent(Group g) const noexcept;
};

struct GroupStats {
  int committee_size = 0;
  std::map<Split, GroupRow> splits;
  GroupRow overall;
  // Per-scorer count of tied reward pairs, in committee order when known.
  std::vector<std::pair<std::string, std::size_t>> scorer_ties;

  nlohmann::ordered_json to_json() const;
  /// Aligned table with columns NoAgree, LowAgree, HighAgree, AllAgree; rows
  /// harmless, helpful, Total. Empty splits render as an em dash.
  std::string render() const;
};

GroupStats group_stats(const Dataset& dataset, std::span<const VoteRecord> votes);

/// Tie counts per scorer; surfaced next to the group table.
std::vector<std::pair<std::string, std::size_t>> scorer_ties(const ScoreMatrix& matrix);

using VoteHistogram = std::map<Split, std::map<int, std::size_t>>;

/// Non-zero counts of each v per split.
VoteHistogram vote_histogram(const Dataset& dataset, std::span<const VoteRecord> votes);
nlohmann::json histogram_json(const VoteHistogram& histogram);

}  // namespace prefaudit
