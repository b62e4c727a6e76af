#include <random>

#include <gtest/gtest.h>

#include "prefaudit/error.hpp"
#include "prefaudit/voting.hpp"
#include "support.hpp"

namespace pa = prefaudit;
using namespace testing_support;
using nlohmann::json;

TEST(Agree, StrictPreference) {
  EXPECT_TRUE(pa::agree(2.0, 1.0));
  EXPECT_FALSE(pa::agree(1.0, 1.0));
  EXPECT_FALSE(pa::agree(-3.5, -3.4));
}

TEST(Group, CommitteeOfEight) {
  EXPECT_EQ(pa::group(0, 8), pa::Group::kNoAgree);
  EXPECT_EQ(pa::group(3, 8), pa::Group::kLowAgree);
  EXPECT_EQ(pa::group(4, 8), pa::Group::kHighAgree);
  EXPECT_EQ(pa::group(5, 8), pa::Group::kHighAgree);
  EXPECT_EQ(pa::group(8, 8), pa::Group::kAllAgree);
}

TEST(Group, CommitteeOfTwoHasNoLowBucket) { EXPECT_EQ(pa::group(1, 2), pa::Group::kHighAgree); }

TEST(Group, OutOfRange) {
  for (auto [v, m] : {std::pair{-1, 8}, {9, 8}, {0, 1}, {0, 0}}) {
    try {
      pa::group(v, m);
      FAIL() << v << "/" << m;
    } catch (const pa::Error& e) {
      EXPECT_EQ(e.code(), pa::ErrorCode::kOutOfRange);
    }
  }
}

// Buckets tile [0, M] as four contiguous, ordered, non-overlapping runs.
TEST(GroupProperty, PartitionForEveryCommitteeSize) {
  for (int m = 2; m <= 16; ++m) {
    std::map<pa::Group, std::vector<int>> members;
    int previous = -1;
    for (int v = 0; v <= m; ++v) {
      auto g = pa::group(v, m);
      ASSERT_GE(static_cast<int>(g), previous) << "m=" << m << " v=" << v;
      previous = static_cast<int>(g);
      members[g].push_back(v);
    }
    EXPECT_EQ(members[pa::Group::kNoAgree], std::vector<int>{0});
    EXPECT_EQ(members[pa::Group::kAllAgree], std::vector<int>{m});
    std::size_t total = 0;
    for (const auto& [g, vs] : members) {
      for (std::size_t k = 1; k < vs.size(); ++k) EXPECT_EQ(vs[k], vs[k - 1] + 1);
      total += vs.size();
    }
    EXPECT_EQ(total, static_cast<std::size_t>(m + 1));
    EXPECT_EQ(members[pa::Group::kLowAgree].size(), static_cast<std::size_t>(std::max(0, m / 2 - 1)));
  }
}

TEST(Vote, Extremes) {
  auto ds = dataset_for_votes({8, 0, 5});
  auto m = matrix_for_votes(ds, {8, 0, 5}, 8);
  auto votes = pa::vote_all(m, ds);
  EXPECT_EQ(votes[0].v, 8);
  EXPECT_EQ(votes[0].group, pa::Group::kAllAgree);
  EXPECT_EQ(votes[1].v, 0);
  EXPECT_EQ(votes[1].group, pa::Group::kNoAgree);
  EXPECT_EQ(votes[2].v, 5);
  EXPECT_EQ(votes[2].group, pa::Group::kHighAgree);
  EXPECT_EQ(std::count(votes[2].agreements.begin(), votes[2].agreements.end(), true), 5);
}

TEST(Vote, TiesCounted) {
  pa::ScoreMatrix m;
  m.scorers = {{"a", pa::ScorerKind::kFile}, {"b", pa::ScorerKind::kFile}};
  m.entries["r"] = {{1, 1}, {2, 1}};
  auto v = pa::vote(m, "r");
  EXPECT_EQ(v.v, 1);
  EXPECT_EQ(v.ties, 1);
  auto ties = pa::scorer_ties(m);
  ASSERT_EQ(ties.size(), 2u);
  EXPECT_EQ(ties[0], (std::pair<std::string, std::size_t>{"a", 1}));
  EXPECT_EQ(ties[1].second, 0u);
}

TEST(Vote, MissingRow) {
  pa::ScoreMatrix m;
  m.scorers = {{"a", pa::ScorerKind::kFile}, {"b", pa::ScorerKind::kFile}};
  try {
    pa::vote(m, "nope");
    FAIL();
  } catch (const pa::Error& e) {
    EXPECT_EQ(e.code(), pa::ErrorCode::kMissingEntry);
  }
}

TEST(Vote, SerializeLoadRoundTrip) {
  TempDir tmp;
  auto ds = dataset_for_votes({0, 3, 8});
  auto votes = pa::vote_all(matrix_for_votes(ds, {0, 3, 8}, 8), ds);
  spit(tmp / "v.jsonl", pa::serialize_votes(votes));
  auto loaded = pa::load_votes(tmp / "v.jsonl");
  ASSERT_EQ(loaded.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(loaded[i].record_id, votes[i].record_id);
    EXPECT_EQ(loaded[i].agreements, votes[i].agreements);
    EXPECT_EQ(loaded[i].group, votes[i].group);
  }
}

TEST(VoteProperty, MonotoneTransformInvariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = generate(rng, 30, 2 + static_cast<int>(rng() % 9));
    auto before = pa::vote_all(g.matrix, g.dataset);
    std::size_t j = rng() % g.matrix.committee_size();
    double scale = 0.5 + static_cast<double>(rng() % 100) / 10.0;
    double shift = static_cast<double>(static_cast<int>(rng() % 21) - 10);
    int shape = static_cast<int>(rng() % 3);
    auto f = [&](double x) {
      switch (shape) {
        case 0: return scale * x + shift;
        case 1: return std::exp(x / 4.0) + shift;
        default: return x * x * x + x;
      }
    };
    for (auto& [id, row] : g.matrix.entries) row[j] = {f(row[j].chosen), f(row[j].rejected)};
    auto after = pa::vote_all(g.matrix, g.dataset);
    for (std::size_t i = 0; i < before.size(); ++i) {
      ASSERT_EQ(before[i].agreements, after[i].agreements);
      ASSERT_EQ(before[i].group, after[i].group);
    }
  }
}

TEST(VoteProperty, VoteIsSumOfAgreements) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = generate(rng, 20, 2 + static_cast<int>(rng() % 15));
    for (const auto& v : pa::vote_all(g.matrix, g.dataset)) {
      int sum = 0;
      for (bool a : v.agreements) sum += a;
      ASSERT_EQ(sum, v.v);
      ASSERT_GE(v.v, 0);
      ASSERT_LE(v.v, v.committee_size());
      ASSERT_EQ(v.group, pa::group(v.v, v.committee_size()));
    }
  }
}

TEST(GroupStats, HarmlessFixture) {
  std::vector<int> votes{0, 0, 2, 3, 3, 5, 6, 7, 8, 8};
  auto ds = dataset_for_votes(votes);
  auto v = pa::vote_all(matrix_for_votes(ds, votes, 8), ds);
  auto stats = pa::group_stats(ds, v);
  const auto& row = stats.splits.at(pa::Split::kHarmless);
  EXPECT_DOUBLE_EQ(row.percent(pa::Group::kNoAgree), 20.0);
  EXPECT_DOUBLE_EQ(row.percent(pa::Group::kLowAgree), 30.0);
  EXPECT_DOUBLE_EQ(row.percent(pa::Group::kHighAgree), 30.0);
  EXPECT_DOUBLE_EQ(row.percent(pa::Group::kAllAgree), 20.0);

  auto text = stats.render();
  EXPECT_NE(text.find("harmless"), std::string::npos);
  EXPECT_NE(text.find("20.00%"), std::string::npos);
  // The helpful split is empty and renders as dashes.
  auto helpful = text.substr(text.find("helpful"));
  helpful = helpful.substr(0, helpful.find('\n'));
  EXPECT_EQ(helpful.find('%'), std::string::npos);
  EXPECT_NE(helpful.find("\xE2\x80\x94"), std::string::npos);

  auto histogram = pa::vote_histogram(ds, v);
  std::map<int, std::size_t> expected{{0, 2}, {2, 1}, {3, 2}, {5, 1}, {6, 1}, {7, 1}, {8, 2}};
  EXPECT_EQ(histogram.at(pa::Split::kHarmless), expected);
}

TEST(GroupStats, HistogramEdgeCases) {
  auto one = dataset_for_votes({8});
  auto v = pa::vote_all(matrix_for_votes(one, {8}, 8), one);
  EXPECT_EQ(pa::vote_histogram(one, v).at(pa::Split::kHarmless), (std::map<int, std::size_t>{{8, 1}}));
  pa::Dataset empty;
  EXPECT_TRUE(pa::vote_histogram(empty, {}).empty());
}

TEST(GroupStats, MissingVote) {
  auto ds = dataset_for_votes({1, 2});
  auto v = pa::vote_all(matrix_for_votes(ds, {1, 2}, 8), ds);
  v.pop_back();
  try {
    pa::group_stats(ds, v);
    FAIL();
  } catch (const pa::Error& e) {
    EXPECT_EQ(e.code(), pa::ErrorCode::kMissingVote);
  }
}

// The frozen reference table was computed by an independent script.
TEST(GroupStats, MatchesOracleFixture) {
  auto ds = pa::load_dataset(data_dir() / "grouping" / "dataset.jsonl");
  auto matrix = pa::load_score_matrix(data_dir() / "grouping" / "matrix.jsonl");
  auto votes = pa::vote_all(matrix, ds);
  auto expected_votes = json::parse(slurp(data_dir() / "grouping" / "expected_votes.json"));
  for (const auto& v : votes) ASSERT_EQ(v.v, expected_votes.at(v.record_id).get<int>()) << v.record_id;

  auto stats = pa::group_stats(ds, votes);
  auto expected = json::parse(slurp(data_dir() / "grouping" / "expected_stats.json"));
  auto check_row = [&](const pa::GroupRow& row, const json& want) {
    EXPECT_EQ(row.total, want["n"].get<std::size_t>());
    for (auto g : pa::kAllGroups) {
      auto name = std::string(pa::to_string(g));
      EXPECT_EQ(row.counts[static_cast<std::size_t>(g)], want["counts"][name].get<std::size_t>()) << name;
      EXPECT_NEAR(row.percent(g), want["percent"][name].get<double>(), 1e-9) << name;
    }
  };
  check_row(stats.splits.at(pa::Split::kHarmless), expected["harmless"]);
  check_row(stats.splits.at(pa::Split::kHelpful), expected["helpful"]);
  check_row(stats.overall, expected["Total"]);
}

TEST(GroupStatsProperty, PercentagesSumToHundred) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = generate(rng, 1 + static_cast<int>(rng() % 60), 8);
    auto stats = pa::group_stats(g.dataset, pa::vote_all(g.matrix, g.dataset));
    for (const auto& [split, row] : stats.splits) {
      if (row.total == 0) continue;
      double sum = 0;
      for (auto grp : pa::kAllGroups) sum += row.percent(grp);
      ASSERT_NEAR(sum, 100.0, 0.01);
    }
  }
}
