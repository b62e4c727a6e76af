#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefaudit/annotation.hpp"
#include "prefaudit/dataset.hpp"
#include "prefaudit/scoring.hpp"
#include "prefaudit/voting.hpp"

namespace prefaudit {

enum class Action { kKeep, kFlip, kRemove };

std::string_view to_string(Action action) noexcept;
std::optional<Action> parse_action(std::string_view text) noexcept;

struct CleanAction {
  std::string record_id;
  Action action = Action::kKeep;
  std::string reason;

  friend bool operator==(const CleanAction&, const CleanAction&) = default;
};

inline constexpr std::string_view kHumanOverrideReason = "human-override";

struct PreferenceStrength {
  std::string record_id;
  double strength = 0.0;
};

/// Mean over scorers of reward(chosen) - reward(rejected), per dataset record.
std::vector<PreferenceStrength> preference_strengths(const ScoreMatrix& matrix,
                                                     const Dataset& dataset);

struct SacOptions {
  // Also remove LowAgree records of the helpful split.
  bool remove_helpful_low = false;
};

/// Source-aware cleaning: NoAgree -> Flip, harmless LowAgree -> Remove,
/// everything else -> Keep.
std::vector<CleanAction> sac(const Dataset& dataset, std::span<const VoteRecord> votes,
                             const SacOptions& options = {});

struct BaselineAux {
  // single_rm: designated scorer; the most accurate one is picked when unset.
  const ScoreMatrix* matrix = nullptr;
  std::optional<std::string> scorer;
  // gen_rm: per-record (chosen, rejected) judge scores and an optional group
  // filter; records outside the filter are kept unjudged.
  std::optional<std::map<std::string, ScorePair>> judge_scores;
  std::optional<std::set<Group>> judge_groups;
  // same_data_rm
  std::optional<std::vector<PreferenceStrength>> strengths;
  double fraction = 0.10;
};

inline constexpr std::array<std::string_view, 10> kBaselineNames{
    "rn",          "rnl",         "fn",       "fnl",      "single_rm_r",
    "single_rm_f", "gen_rm_r",    "gen_rm_f", "same_data_rm_r", "same_data_rm_f"};

/// "sac" followed by the ten baselines.
std::vector<std::string_view> strategy_names();
bool is_known_strategy(std::string_view name) noexcept;

std::vector<CleanAction> baseline(std::string_view name, const Dataset& dataset,
                                  std::span<const VoteRecord> votes, const BaselineAux& aux);

struct StrategyConfig {
  std::string name = "sac";
  SacOptions sac;
  BaselineAux aux;
};

std::vector<CleanAction> run_strategy(const StrategyConfig& config, const Dataset& dataset,
                                      std::span<const VoteRecord> votes);

/// Swaps chosen and rejected and toggles the "flipped" meta flag, so flipping
/// twice restores the record exactly.
PreferenceRecord flip_record(const PreferenceRecord& record);

struct ActionCounts {
  std::size_t keep = 0, flip = 0, remove = 0;
  void add(Action a) noexcept;
  std::size_t total() const noexcept { return keep + flip + remove; }
};

struct CleanReport {
  std::string strategy;
  std::size_t input_size = 0;
  std::size_t output_size = 0;
  ActionCounts totals;
  std::size_t human_overrides = 0;
  std::map<std::pair<Split, Group>, ActionCounts> cells;
  nlohmann::json config;

  nlohmann::ordered_json to_json() const;
  std::string render() const;
};

struct CleanResult {
  std::vector<PreferenceRecord> records;
  CleanReport report;
};

/// Applies one action per record in dataset order. Throws ActionCoverageGap
/// when a record lacks an action or an action names an unknown record.
CleanResult materialize(const Dataset& dataset, std::span<const CleanAction> actions,
                        std::span<const VoteRecord> votes, std::string strategy = {},
                        nlohmann::json config = nlohmann::json::object());

/// Human decisions override automatic actions; the latest timestamp per
/// record wins. Uncertain leaves the automatic action in place.
std::vector<CleanAction> merge_overrides(std::span<const CleanAction> actions,
                                         std::span<const ReviewDecision> decisions);

std::string serialize_actions(std::span<const CleanAction> actions);
std::vector<CleanAction> load_actions(const std::filesystem::path& path);

}  // namespace prefaudit
