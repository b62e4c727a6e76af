#include "prefaudit/cleaning.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "io_util.hpp"
#include "prefaudit/error.hpp"

namespace prefaudit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Action action) noexcept {
  switch (action) {
    case Action::kKeep: return "keep";
    case Action::kFlip: return "flip";
    case Action::kRemove: return "remove";
  }
  return "keep";
}

std::optional<Action> parse_action(std::string_view text) noexcept {
  if (text == "keep") return Action::kKeep;
  if (text == "flip") return Action::kFlip;
  if (text == "remove") return Action::kRemove;
  return std::nullopt;
}

std::vector<PreferenceStrength> preference_strengths(const ScoreMatrix& matrix,
                                                     const Dataset& dataset) {
  std::vector<PreferenceStrength> out;
  out.reserve(dataset.size());
  for (const auto& record : dataset.records) {
    const auto& row = matrix.row(record.id);
    double sum = 0.0;
    for (const auto& pair : row) sum += pair.chosen - pair.rejected;
    double strength = row.empty() ? 0.0 : sum / static_cast<double>(row.size());
    if (!std::isfinite(strength)) {
      throw Error(ErrorCode::kNonFiniteScore, "non-finite preference strength for " + record.id,
                  {{"record_id", record.id}});
    }
    out.push_back({record.id, strength});
  }
  return out;
}

namespace {

// Looks up each record's vote, in dataset order.
std::vector<const VoteRecord*> votes_in_order(const Dataset& dataset,
                                              std::span<const VoteRecord> votes) {
  auto index = index_votes(votes);
  std::vector<const VoteRecord*> out;
  out.reserve(dataset.size());
  for (const auto& record : dataset.records) {
    auto it = index.find(record.id);
    if (it == index.end()) {
      throw Error(ErrorCode::kMissingVote, "record '" + record.id + "' has no vote",
                  {{"record_id", record.id}});
    }
    out.push_back(it->second);
  }
  return out;
}

std::vector<CleanAction> by_group(const Dataset& dataset, std::span<const VoteRecord> votes,
                                  std::string_view name, Action action, bool include_low) {
  auto ordered = votes_in_order(dataset, votes);
  std::vector<CleanAction> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto g = ordered[i]->group;
    const bool hit = g == Group::kNoAgree || (include_low && g == Group::kLowAgree);
    out.push_back({dataset.records[i].id, hit ? action : Action::kKeep,
                   std::string(name) + (hit ? ":" + std::string(to_string(g)) : ":keep")});
  }
  return out;
}

[[noreturn]] void missing_aux(std::string_view strategy, const std::string& what) {
  throw Error(ErrorCode::kMissingAux, std::string(strategy) + " needs " + what,
              {{"strategy", strategy}});
}

std::vector<CleanAction> single_rm(const Dataset& dataset, std::string_view name, Action action,
                                   const BaselineAux& aux) {
  if (!aux.matrix) missing_aux(name, "a score matrix");
  const auto scorer = aux.scorer.value_or(select_best_scorer(*aux.matrix));
  const auto j = aux.matrix->scorer_index(scorer);
  std::vector<CleanAction> out;
  for (const auto& record : dataset.records) {
    const auto& pair = aux.matrix->row(record.id)[j];
    const bool disagrees = !agree(pair.chosen, pair.rejected);
    out.push_back({record.id, disagrees ? action : Action::kKeep,
                   std::string(name) + (disagrees ? ":" + scorer + "_disagrees" : ":keep")});
  }
  return out;
}

std::vector<CleanAction> gen_rm(const Dataset& dataset, std::span<const VoteRecord> votes,
                                std::string_view name, Action action, const BaselineAux& aux) {
  if (!aux.judge_scores) missing_aux(name, "judge verdicts");
  std::vector<const VoteRecord*> ordered;
  if (aux.judge_groups) ordered = votes_in_order(dataset, votes);

  std::vector<CleanAction> out;
  json missing = json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& id = dataset.records[i].id;
    if (aux.judge_groups && !aux.judge_groups->contains(ordered[i]->group)) {
      out.push_back({id, Action::kKeep, std::string(name) + ":not_judged"});
      continue;
    }
    auto it = aux.judge_scores->find(id);
    if (it == aux.judge_scores->end()) {
      missing.push_back(id);
      continue;
    }
    // Ties keep the original label.
    const bool rejected_wins = it->second.rejected > it->second.chosen;
    out.push_back({id, rejected_wins ? action : Action::kKeep,
                   std::string(name) + (rejected_wins ? ":judge_prefers_rejected" : ":keep")});
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::kMissingAux,
                std::string(name) + ": " + std::to_string(missing.size()) +
                    " records have no judge verdict",
                {{"strategy", name}, {"records", missing}});
  }
  return out;
}

std::vector<CleanAction> same_data_rm(const Dataset& dataset, std::string_view name,
                                      Action action, const BaselineAux& aux) {
  if (!aux.strengths) missing_aux(name, "preference strengths");
  if (!(aux.fraction >= 0.0 && aux.fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "same_data_rm fraction must lie in [0, 1]");
  }
  std::map<std::string_view, double> strength;
  for (const auto& s : *aux.strengths) strength[s.record_id] = s.strength;

  std::vector<std::pair<double, std::string_view>> ranked;
  ranked.reserve(dataset.size());
  for (const auto& record : dataset.records) {
    auto it = strength.find(record.id);
    if (it == strength.end()) missing_aux(name, "a strength for record '" + record.id + "'");
    ranked.emplace_back(it->second, record.id);
  }
  // (strength, id) is a total order, so the cutoff does not depend on input order.
  std::sort(ranked.begin(), ranked.end());
  const auto cutoff =
      static_cast<std::size_t>(std::floor(aux.fraction * static_cast<double>(dataset.size())));
  std::set<std::string_view> hit;
  for (std::size_t i = 0; i < cutoff; ++i) hit.insert(ranked[i].second);

  std::vector<CleanAction> out;
  for (const auto& record : dataset.records) {
    const bool weak = hit.contains(record.id);
    out.push_back({record.id, weak ? action : Action::kKeep,
                   std::string(name) + (weak ? ":weakest_strength" : ":keep")});
  }
  return out;
}

}  // namespace

std::vector<CleanAction> sac(const Dataset& dataset, std::span<const VoteRecord> votes,
                             const SacOptions& options) {
  auto ordered = votes_in_order(dataset, votes);
  std::vector<CleanAction> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& record = dataset.records[i];
    const auto g = ordered[i]->group;
    if (g == Group::kNoAgree) {
      out.push_back({record.id, Action::kFlip, "sac:NoAgree"});
    } else if (g == Group::kLowAgree &&
               (record.split == Split::kHarmless || options.remove_helpful_low)) {
      out.push_back({record.id, Action::kRemove, "sac:LowAgree_" + std::string(to_string(record.split))});
    } else {
      out.push_back({record.id, Action::kKeep, "sac:keep"});
    }
  }
  return out;
}

std::vector<std::string_view> strategy_names() {
  std::vector<std::string_view> out{"sac"};
  out.insert(out.end(), kBaselineNames.begin(), kBaselineNames.end());
  return out;
}

bool is_known_strategy(std::string_view name) noexcept {
  return name == "sac" ||
         std::find(kBaselineNames.begin(), kBaselineNames.end(), name) != kBaselineNames.end();
}

std::vector<CleanAction> baseline(std::string_view name, const Dataset& dataset,
                                  std::span<const VoteRecord> votes, const BaselineAux& aux) {
  if (name == "rn") return by_group(dataset, votes, name, Action::kRemove, false);
  if (name == "rnl") return by_group(dataset, votes, name, Action::kRemove, true);
  if (name == "fn") return by_group(dataset, votes, name, Action::kFlip, false);
  if (name == "fnl") return by_group(dataset, votes, name, Action::kFlip, true);
  if (name == "single_rm_r") return single_rm(dataset, name, Action::kRemove, aux);
  if (name == "single_rm_f") return single_rm(dataset, name, Action::kFlip, aux);
  if (name == "gen_rm_r") return gen_rm(dataset, votes, name, Action::kRemove, aux);
  if (name == "gen_rm_f") return gen_rm(dataset, votes, name, Action::kFlip, aux);
  if (name == "same_data_rm_r") return same_data_rm(dataset, name, Action::kRemove, aux);
  if (name == "same_data_rm_f") return same_data_rm(dataset, name, Action::kFlip, aux);
  throw Error(ErrorCode::kUnknownStrategy, "unknown strategy '" + std::string(name) + "'",
              {{"strategy", name}});
}

std::vector<CleanAction> run_strategy(const StrategyConfig& config, const Dataset& dataset,
                                      std::span<const VoteRecord> votes) {
  if (config.name == "sac") return sac(dataset, votes, config.sac);
  return baseline(config.name, dataset, votes, config.aux);
}

PreferenceRecord flip_record(const PreferenceRecord& record) {
  PreferenceRecord out = record;
  std::swap(out.chosen, out.rejected);
  const std::string key(kMetaFlipped);
  if (out.meta.erase(key) == 0) out.meta.emplace(key, "true");
  return out;
}

void ActionCounts::add(Action a) noexcept {
  switch (a) {
    case Action::kKeep: ++keep; break;
    case Action::kFlip: ++flip; break;
    case Action::kRemove: ++remove; break;
  }
}

namespace {

ordered_json counts_json(const ActionCounts& c) {
  return ordered_json{{"keep", c.keep}, {"flip", c.flip}, {"remove", c.remove}};
}

}  // namespace

ordered_json CleanReport::to_json() const {
  ordered_json out;
  out["strategy"] = strategy;
  out["input_size"] = input_size;
  out["output_size"] = output_size;
  out["totals"] = counts_json(totals);
  out["human_overrides"] = human_overrides;
  auto rows = ordered_json::array();
  for (const auto& [key, counts] : cells) {
    auto row = counts_json(counts);
    row["split"] = to_string(key.first);
    row["group"] = to_string(key.second);
    rows.push_back(std::move(row));
  }
  out["cells"] = std::move(rows);
  out["config"] = ordered_json::parse(config.dump());
  return out;
}

std::string CleanReport::render() const {
  std::ostringstream out;
  out << "strategy: " << strategy << "\n"
      << "input: " << input_size << "  output: " << output_size
      << "  human overrides: " << human_overrides << "\n\n";
  out << std::left << std::setw(10) << "Split" << std::setw(11) << "Group" << std::right
      << std::setw(8) << "Keep" << std::setw(8) << "Flip" << std::setw(8) << "Remove" << '\n';
  auto line = [&](std::string_view split, std::string_view group, const ActionCounts& c) {
    out << std::left << std::setw(10) << split << std::setw(11) << group << std::right
        << std::setw(8) << c.keep << std::setw(8) << c.flip << std::setw(8) << c.remove << '\n';
  };
  for (const auto& [key, counts] : cells) line(to_string(key.first), to_string(key.second), counts);
  line("Total", "", totals);
  return out.str();
}

CleanResult materialize(const Dataset& dataset, std::span<const CleanAction> actions,
                        std::span<const VoteRecord> votes, std::string strategy, json config) {
  std::map<std::string_view, const CleanAction*> by_id;
  json unknown = json::array();
  json duplicated = json::array();
  std::set<std::string_view> ids;
  for (const auto& r : dataset.records) ids.insert(r.id);
  for (const auto& a : actions) {
    if (!ids.contains(a.record_id)) unknown.push_back(a.record_id);
    if (!by_id.emplace(a.record_id, &a).second) duplicated.push_back(a.record_id);
  }
  json uncovered = json::array();
  for (const auto& r : dataset.records) {
    if (!by_id.contains(r.id)) uncovered.push_back(r.id);
  }
  if (!unknown.empty() || !duplicated.empty() || !uncovered.empty()) {
    throw Error(ErrorCode::kActionCoverageGap,
                "actions do not cover the dataset one-to-one (" + std::to_string(uncovered.size()) +
                    " uncovered, " + std::to_string(unknown.size()) + " unknown, " +
                    std::to_string(duplicated.size()) + " duplicated)",
                {{"uncovered", uncovered}, {"unknown", unknown}, {"duplicated", duplicated}});
  }

  auto ordered_votes = votes_in_order(dataset, votes);
  CleanResult result;
  auto& report = result.report;
  report.strategy = std::move(strategy);
  report.config = std::move(config);
  report.input_size = dataset.size();
  for (auto s : kAllSplits) {
    for (auto g : kAllGroups) report.cells[{s, g}] = {};
  }

  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& record = dataset.records[i];
    const auto& action = *by_id.at(record.id);
    report.totals.add(action.action);
    report.cells[{record.split, ordered_votes[i]->group}].add(action.action);
    if (action.reason == kHumanOverrideReason) ++report.human_overrides;
    switch (action.action) {
      case Action::kKeep: result.records.push_back(record); break;
      case Action::kFlip: result.records.push_back(flip_record(record)); break;
      case Action::kRemove: break;
    }
  }
  report.output_size = result.records.size();
  return result;
}

std::vector<CleanAction> merge_overrides(std::span<const CleanAction> actions,
                                         std::span<const ReviewDecision> decisions) {
  std::map<std::string_view, std::size_t> position;
  for (std::size_t i = 0; i < actions.size(); ++i) position.emplace(actions[i].record_id, i);

  // Latest decision per record; equal timestamps resolve to the later entry.
  std::map<std::string_view, const ReviewDecision*> latest;
  for (const auto& d : decisions) {
    if (!position.contains(d.record_id)) {
      throw Error(ErrorCode::kUnknownRecord,
                  "decision references unknown record '" + d.record_id + "'",
                  {{"record_id", d.record_id}});
    }
    auto [it, inserted] = latest.emplace(d.record_id, &d);
    if (!inserted && d.timestamp_ms >= it->second->timestamp_ms) it->second = &d;
  }

  std::vector<CleanAction> out(actions.begin(), actions.end());
  for (const auto& [id, d] : latest) {
    std::optional<Action> forced;
    switch (d->label) {
      case Label::kRejectedBetter: forced = Action::kFlip; break;
      case Label::kChosenBetter: forced = Action::kKeep; break;
      case Label::kBothBad: forced = Action::kRemove; break;
      case Label::kBothGood: forced = Action::kKeep; break;
      case Label::kUncertain: break;
    }
    if (!forced) continue;
    auto& a = out[position.at(id)];
    a.action = *forced;
    a.reason = std::string(kHumanOverrideReason);
  }
  return out;
}

std::string serialize_actions(std::span<const CleanAction> actions) {
  std::string out;
  for (const auto& a : actions) {
    out += ordered_json{{"record_id", a.record_id},
                        {"action", to_string(a.action)},
                        {"reason", a.reason}}
               .dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<CleanAction> load_actions(const std::filesystem::path& path) {
  std::vector<CleanAction> out;
  detail::for_each_jsonl(detail::read_file(path), [&](const json& row, std::size_t line) {
    auto action = parse_action(detail::require_string(row, "action", line));
    if (!action) {
      throw Error(ErrorCode::kSchemaViolation, "line " + std::to_string(line) + ": bad action",
                  {{"line", line}});
    }
    out.push_back({detail::require_string(row, "record_id", line), *action,
                   row.value("reason", "")});
  });
  return out;
}

}  // namespace prefaudit
