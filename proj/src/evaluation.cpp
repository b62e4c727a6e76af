#include "prefaudit/evaluation.hpp"

#include <cmath>
#include <sstream>

#include "io_util.hpp"
#include "prefaudit/error.hpp"

namespace prefaudit {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

double rate(std::size_t count, std::size_t n) {
  return n == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(n);
}

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kNonFiniteScore, std::string("non-finite ") + what);
  }
}

}  // namespace

double EvalReport::win_rate() const noexcept { return rate(wins, n); }
double EvalReport::tie_rate() const noexcept { return rate(ties, n); }
double EvalReport::loss_rate() const noexcept { return rate(losses, n); }
double EvalReport::win_tie_rate() const noexcept { return rate(wins + ties, n); }

ordered_json EvalReport::to_json() const {
  return ordered_json{{"n", n},
                      {"wins", wins},
                      {"ties", ties},
                      {"losses", losses},
                      {"win_rate", win_rate()},
                      {"tie_rate", tie_rate()},
                      {"loss_rate", loss_rate()},
                      {"win_tie_rate", win_tie_rate()}};
}

std::string EvalReport::render() const {
  std::ostringstream out;
  out << "n=" << n << "  win/tie/loss = " << wins << "/" << ties << "/" << losses << "\n"
      << "win " << detail::format_fixed(100.0 * win_rate(), 1) << "%  tie "
      << detail::format_fixed(100.0 * tie_rate(), 1) << "%  loss "
      << detail::format_fixed(100.0 * loss_rate(), 1) << "%  win-tie "
      << detail::format_fixed(100.0 * win_tie_rate(), 1) << "%\n";
  return out.str();
}

EvalReport tally(std::span<const PairJudgment> judgments) {
  if (judgments.empty()) throw Error(ErrorCode::kEmptyInput, "no judgments to tally");
  EvalReport report;
  for (const auto& j : judgments) {
    require_finite(j.score_a, "judgment score");
    require_finite(j.score_b, "judgment score");
    if (j.score_a > j.score_b) {
      ++report.wins;
    } else if (j.score_a == j.score_b) {
      ++report.ties;
    } else {
      ++report.losses;
    }
  }
  report.n = judgments.size();
  return report;
}

double pref_accuracy(std::span<const ScorePair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "no score pairs");
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    require_finite(p.chosen, "score");
    require_finite(p.rejected, "score");
    if (p.chosen > p.rejected) ++correct;
  }
  return rate(correct, pairs.size());
}

RewardSummary avg_reward(std::span<const double> rewards) {
  if (rewards.empty()) throw Error(ErrorCode::kEmptyInput, "no rewards");
  RewardSummary out;
  out.n = rewards.size();
  double sum = 0.0;
  for (double r : rewards) {
    require_finite(r, "reward");
    sum += r;
  }
  out.mean = sum / static_cast<double>(out.n);
  if (out.n > 1) {
    double squares = 0.0;
    for (double r : rewards) squares += (r - out.mean) * (r - out.mean);
    out.stderr_ = std::sqrt(squares / static_cast<double>(out.n - 1)) /
                  std::sqrt(static_cast<double>(out.n));
  }
  return out;
}

std::vector<PairJudgment> load_judgments(const std::filesystem::path& path) {
  std::vector<PairJudgment> out;
  detail::for_each_jsonl(detail::read_file(path), [&](const json& row, std::size_t line) {
    PairJudgment j;
    j.prompt_id = detail::require_string(row, "prompt_id", line);
    j.score_a = detail::require_number(row, "score_a", line);
    j.score_b = detail::require_number(row, "score_b", line);
    if (auto meta = row.find("meta"); meta != row.end()) j.meta = *meta;
    out.push_back(std::move(j));
  });
  return out;
}

std::vector<ScorePair> load_score_pairs(const std::filesystem::path& path) {
  std::vector<ScorePair> out;
  detail::for_each_jsonl(detail::read_file(path), [&](const json& row, std::size_t line) {
    out.push_back({detail::require_number(row, "score_chosen", line),
                   detail::require_number(row, "score_rejected", line)});
  });
  return out;
}

std::vector<double> load_rewards(const std::filesystem::path& path) {
  std::vector<double> out;
  detail::for_each_jsonl(detail::read_file(path), [&](const json& row, std::size_t line) {
    out.push_back(detail::require_number(row, "reward", line));
  });
  return out;
}

}  // namespace prefaudit
