#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefaudit/scoring.hpp"

namespace prefaudit {

/// Judge scores for a candidate (a) and a reference (b) answer to one prompt.
struct PairJudgment {
  std::string prompt_id;
  double score_a = 0.0;
  double score_b = 0.0;
  nlohmann::json meta = nlohmann::json::object();
};

struct EvalReport {
  std::size_t wins = 0, ties = 0, losses = 0;
  std::size_t n = 0;

  double win_rate() const noexcept;
  double tie_rate() const noexcept;
  double loss_rate() const noexcept;
  double win_tie_rate() const noexcept;

  nlohmann::ordered_json to_json() const;
  std::string render() const;
};

/// a > b wins, exact equality ties, otherwise a loss. Throws EmptyInput.
EvalReport tally(std::span<const PairJudgment> judgments);

/// Fraction of pairs with score(chosen) > score(rejected); ties are wrong.
double pref_accuracy(std::span<const ScorePair> pairs);

struct RewardSummary {
  double mean = 0.0;
  double stderr_ = 0.0;  // sample standard deviation / sqrt(n); 0 when n = 1
  std::size_t n = 0;
};

RewardSummary avg_reward(std::span<const double> rewards);

std::vector<PairJudgment> load_judgments(const std::filesystem::path& path);
/// {id, score_chosen, score_rejected} rows.
std::vector<ScorePair> load_score_pairs(const std::filesystem::path& path);
/// {id, reward} rows.
std::vector<double> load_rewards(const std::filesystem::path& path);

}  // namespace prefaudit
