#include <random>

#include <gtest/gtest.h>

#include "prefaudit/dataset.hpp"
#include "prefaudit/error.hpp"
#include "support.hpp"

namespace pa = prefaudit;
using namespace testing_support;

namespace {

pa::ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const pa::Error& e) {
    return e.code();
  }
  return pa::ErrorCode::kOk;
}

std::string hh(std::initializer_list<std::pair<bool, std::string>> turns) {
  std::string out;
  for (const auto& [human, text] : turns) out += (human ? "\n\nHuman: " : "\n\nAssistant: ") + text;
  return out;
}

}  // namespace

TEST(Transcript, SingleExchange) {
  auto turns = pa::parse_transcript("\n\nHuman: hi\n\nAssistant: hello", pa::MarkerStyle::hh());
  ASSERT_EQ(turns.size(), 2u);
  EXPECT_EQ(turns[0], (pa::Turn{pa::Role::kHuman, "hi"}));
  EXPECT_EQ(turns[1], (pa::Turn{pa::Role::kAssistant, "hello"}));
}

TEST(Transcript, HashStyleTrailingEmptyAssistant) {
  auto turns = pa::parse_transcript(
      "###Human: What are some symptoms of caffeine withdrawel? ###Assistant:",
      pa::MarkerStyle::hashes());
  ASSERT_EQ(turns.size(), 2u);
  EXPECT_EQ(turns[0].text, "What are some symptoms of caffeine withdrawel?");
  EXPECT_EQ(turns[1], (pa::Turn{pa::Role::kAssistant, ""}));
}

TEST(Transcript, LeadingAssistantIsMalformedAtOffsetZero) {
  try {
    pa::parse_transcript("\n\nAssistant: hi", pa::MarkerStyle::hh());
    FAIL() << "expected MalformedTranscript";
  } catch (const pa::Error& e) {
    EXPECT_EQ(e.code(), pa::ErrorCode::kMalformedTranscript);
    EXPECT_EQ(e.details().at("offset"), 0);
  }
}

TEST(Transcript, RepeatedRoleReportsSecondMarker) {
  std::string raw = "\n\nHuman: a\n\nHuman: b";
  try {
    pa::parse_transcript(raw, pa::MarkerStyle::hh());
    FAIL();
  } catch (const pa::Error& e) {
    EXPECT_EQ(e.code(), pa::ErrorCode::kMalformedTranscript);
    EXPECT_EQ(e.details().at("offset"), raw.find("\n\nHuman: b"));
  }
}

TEST(Transcript, EmptyInputIsMalformed) {
  EXPECT_EQ(code_of([] { pa::parse_transcript("   ", pa::MarkerStyle::hh()); }),
            pa::ErrorCode::kMalformedTranscript);
}

TEST(Transcript, RenderRoundTrip) {
  std::vector<pa::Turn> turns{{pa::Role::kHuman, "a b"}, {pa::Role::kAssistant, "c"},
                              {pa::Role::kHuman, "d"}};
  for (const auto& style : {pa::MarkerStyle::hh(), pa::MarkerStyle::hashes()}) {
    EXPECT_EQ(pa::parse_transcript(pa::render_transcript(turns, style), style), turns);
  }
}

TEST(Transcript, UnknownMarkerName) {
  EXPECT_EQ(code_of([] { pa::MarkerStyle::from_name("xml"); }), pa::ErrorCode::kInvalidArgument);
}

// Random strings over marker fragments either parse or fail with exactly one
// classified error carrying an in-range offset.
TEST(TranscriptProperty, ParserTotality) {
  std::mt19937_64 rng(7);
  const std::vector<std::string> pieces{"\n\nHuman:", "\n\nAssistant:", " hi", "\n", " ",
                                        "Human", "x", "###Human:", "Assistant:"};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::uniform_int_distribution<int> len(0, 8);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string raw;
    for (int k = len(rng); k > 0; --k) raw += pieces[pick(rng)];
    try {
      auto turns = pa::parse_transcript(raw, pa::MarkerStyle::hh());
      ASSERT_FALSE(turns.empty());
      ASSERT_EQ(turns.front().role, pa::Role::kHuman);
      for (std::size_t i = 1; i < turns.size(); ++i) ASSERT_NE(turns[i].role, turns[i - 1].role);
    } catch (const pa::Error& e) {
      ASSERT_EQ(e.code(), pa::ErrorCode::kMalformedTranscript) << raw;
      ASSERT_LE(e.details().at("offset").get<std::size_t>(), raw.size());
    }
  }
}

TEST(SharedContext, SplitsAtTail) {
  pa::RawPairRow row{hh({{true, "q"}, {false, "a1"}, {true, "q2"}, {false, "A"}}),
                     hh({{true, "q"}, {false, "a1"}, {true, "q2"}, {false, "B"}})};
  auto out = pa::split_shared_context(row, pa::MarkerStyle::hh());
  ASSERT_EQ(out.context.size(), 3u);
  EXPECT_EQ(out.context[2].text, "q2");
  EXPECT_EQ(out.chosen, "A");
  EXPECT_EQ(out.rejected, "B");
  EXPECT_FALSE(out.identical);
}

TEST(SharedContext, DivergenceBeforeTail) {
  auto six = [](const std::string& second) {
    return hh({{true, "q"}, {false, second}, {true, "q2"}, {false, "a"}, {true, "q3"}, {false, "z"}});
  };
  pa::RawPairRow row{six("one"), six("two")};
  EXPECT_EQ(code_of([&] { pa::split_shared_context(row, pa::MarkerStyle::hh()); }),
            pa::ErrorCode::kDivergenceNotAtTail);
}

TEST(SharedContext, RoleMismatchWhenEndingWithHuman) {
  pa::RawPairRow row{hh({{true, "q"}}), hh({{true, "q"}, {false, "a"}})};
  EXPECT_EQ(code_of([&] { pa::split_shared_context(row, pa::MarkerStyle::hh()); }),
            pa::ErrorCode::kRoleMismatch);
}

TEST(SharedContext, IdenticalNeedsFlag) {
  auto t = hh({{true, "q"}, {false, "same"}});
  pa::RawPairRow row{t, t};
  EXPECT_EQ(code_of([&] { pa::split_shared_context(row, pa::MarkerStyle::hh()); }),
            pa::ErrorCode::kIdenticalResponses);
  auto out = pa::split_shared_context(row, pa::MarkerStyle::hh(), true);
  EXPECT_TRUE(out.identical);
  EXPECT_EQ(out.chosen, "same");
}

// Five synthetic raw rows covering each outcome of the shared-context split.
TEST(SharedContext, FiveRowCorpus) {
  struct Case {
    std::string chosen, rejected;
    pa::ErrorCode plain, allowed;
  };
  auto ok = pa::ErrorCode::kOk;
  std::vector<Case> corpus{
      {hh({{true, "q"}, {false, "A"}}), hh({{true, "q"}, {false, "B"}}), ok, ok},
      {hh({{true, "q"}, {false, "A"}}), hh({{true, "q"}, {false, "A"}}),
       pa::ErrorCode::kIdenticalResponses, ok},
      {hh({{true, "q"}, {false, "x"}, {true, "r"}, {false, "A"}}),
       hh({{true, "q"}, {false, "y"}, {true, "r"}, {false, "B"}}),
       pa::ErrorCode::kDivergenceNotAtTail, pa::ErrorCode::kDivergenceNotAtTail},
      {hh({{true, "q"}, {false, "A"}}), hh({{true, "q"}, {false, "A"}, {true, "more"}, {false, "B"}}),
       pa::ErrorCode::kDivergenceNotAtTail, pa::ErrorCode::kDivergenceNotAtTail},
      {hh({{true, "q"}, {false, ""}}), hh({{true, "q"}, {false, "B"}}), ok, ok},
  };
  for (const auto& c : corpus) {
    pa::RawPairRow row{c.chosen, c.rejected};
    EXPECT_EQ(code_of([&] { pa::split_shared_context(row, pa::MarkerStyle::hh()); }), c.plain);
    EXPECT_EQ(code_of([&] { pa::split_shared_context(row, pa::MarkerStyle::hh(), true); }), c.allowed);
  }
}

TEST(SharedContextProperty, ContextEqualUnderBothParses) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> exchanges(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::string prefix;
    std::vector<pa::Turn> expected;
    for (int k = exchanges(rng); k > 0; --k) {
      auto q = "q" + std::to_string(rng() % 100), a = "a" + std::to_string(rng() % 100);
      prefix += hh({{true, q}, {false, a}});
      expected.push_back({pa::Role::kHuman, q});
      expected.push_back({pa::Role::kAssistant, a});
    }
    prefix += hh({{true, "last"}});
    expected.push_back({pa::Role::kHuman, "last"});
    pa::RawPairRow row{prefix + hh({{false, "c"}}), prefix + hh({{false, "r"}})};
    auto out = pa::split_shared_context(row, pa::MarkerStyle::hh());
    ASSERT_EQ(out.context, expected);
    pa::RawPairRow swapped{row.rejected_transcript, row.chosen_transcript};
    ASSERT_EQ(pa::split_shared_context(swapped, pa::MarkerStyle::hh()).context, out.context);
  }
}

TEST(Dataset, EmptyFile) {
  auto ds = pa::parse_dataset("");
  EXPECT_EQ(ds.size(), 0u);
}

TEST(Dataset, ThreeRecordsUniqueIds) {
  std::string text;
  for (int i = 0; i < 3; ++i) {
    text += pa::serialize_record(make_record("id" + std::to_string(i), pa::Split::kHelpful, i)) + "\n";
  }
  auto ds = pa::parse_dataset(text);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_NE(ds.records[0].id, ds.records[1].id);
  EXPECT_NE(ds.records[1].id, ds.records[2].id);
}

TEST(Dataset, DuplicateIdIsSchemaViolation) {
  auto line = pa::serialize_record(make_record("dup", pa::Split::kHelpful)) + "\n";
  try {
    pa::parse_dataset(line + line);
    FAIL();
  } catch (const pa::Error& e) {
    EXPECT_EQ(e.code(), pa::ErrorCode::kSchemaViolation);
    EXPECT_EQ(e.details().at("line"), 2);
  }
}

TEST(Dataset, MissingSplitDefaultsToHelpful) {
  auto ds = pa::parse_dataset(
      R"({"id":"a","context":[{"role":"human","text":"q"}],"chosen":"x","rejected":"y"})"
      "\n");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.records[0].split, pa::Split::kHelpful);
  EXPECT_EQ(ds.report.missing_split, 1u);
}

TEST(Dataset, UnknownSplitRejected) {
  EXPECT_EQ(code_of([] {
              pa::parse_dataset(
                  R"({"id":"a","split":"harmful","context":[],"chosen":"x","rejected":"y"})");
            }),
            pa::ErrorCode::kSchemaViolation);
}

TEST(Dataset, ContextMustEndWithHuman) {
  EXPECT_EQ(code_of([] {
              pa::parse_dataset(
                  R"({"id":"a","split":"helpful","context":[{"role":"human","text":"q"},{"role":"assistant","text":"a"}],"chosen":"x","rejected":"y"})");
            }),
            pa::ErrorCode::kSchemaViolation);
}

TEST(Dataset, IdenticalResponsesNeedMetaFlag) {
  EXPECT_EQ(code_of([] {
              pa::parse_dataset(R"({"id":"a","split":"helpful","context":[],"chosen":"x","rejected":"x"})");
            }),
            pa::ErrorCode::kSchemaViolation);
  auto ds = pa::parse_dataset(
      R"({"id":"a","split":"helpful","context":[],"chosen":"x","rejected":"x","meta":{"allow_identical":"true"}})");
  EXPECT_EQ(ds.size(), 1u);
}

TEST(Dataset, RawRowsAreDetected) {
  nlohmann::json row{{"chosen", hh({{true, "q"}, {false, "good"}})},
                     {"rejected", hh({{true, "q"}, {false, "bad"}})},
                     {"split", "harmless"}};
  auto ds = pa::parse_dataset(row.dump() + "\n");
  ASSERT_EQ(ds.size(), 1u);
  const auto& r = ds.records[0];
  EXPECT_EQ(r.chosen, "good");
  EXPECT_EQ(r.rejected, "bad");
  EXPECT_EQ(r.split, pa::Split::kHarmless);
  EXPECT_EQ(r.id, pa::content_id(r));
  EXPECT_EQ(r.id.rfind("rec-", 0), 0u);
  EXPECT_EQ(ds.report.raw_rows, 1u);
}

TEST(Dataset, RawErrorsCarryLine) {
  nlohmann::json good{{"chosen", hh({{true, "q"}, {false, "a"}})}, {"rejected", hh({{true, "q"}, {false, "b"}})}};
  nlohmann::json bad{{"chosen", "\n\nAssistant: x"}, {"rejected", hh({{true, "q"}, {false, "b"}})}};
  try {
    pa::parse_dataset(good.dump() + "\n" + bad.dump() + "\n");
    FAIL();
  } catch (const pa::Error& e) {
    EXPECT_EQ(e.code(), pa::ErrorCode::kMalformedTranscript);
    EXPECT_EQ(e.details().at("line"), 2);
  }
}

TEST(Dataset, EmptyAssistantTurnsCounted) {
  nlohmann::json row{{"chosen", hh({{true, "q"}, {false, ""}, {true, "again"}, {false, "a"}})},
                     {"rejected", hh({{true, "q"}, {false, ""}, {true, "again"}, {false, "b"}})}};
  auto ds = pa::parse_dataset(row.dump());
  EXPECT_EQ(ds.report.empty_assistant_turns, 1u);
}

TEST(Dataset, MalformedJsonLine) {
  EXPECT_EQ(code_of([] { pa::parse_dataset("{not json}\n"); }), pa::ErrorCode::kSchemaViolation);
}

TEST(Dataset, MissingFileIsIo) {
  EXPECT_EQ(code_of([] { pa::load_dataset("/nonexistent/prefaudit.jsonl"); }), pa::ErrorCode::kIo);
}

TEST(DatasetProperty, SaveLoadRoundTrip) {
  std::mt19937_64 rng(3);
  TempDir tmp;
  const std::string alphabet = "ab \"\\\n\tü漢";
  auto text = [&](int n) {
    std::string s;
    for (int i = 0; i < n; ++i) {
      std::size_t k = rng() % 8;
      s += k < 6 ? std::string(1, alphabet[k]) : (k == 6 ? "ü" : "漢");
    }
    return s;
  };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<pa::PreferenceRecord> records;
    for (int i = 0; i < 20; ++i) {
      pa::PreferenceRecord r;
      r.id = "id-" + std::to_string(i);
      r.split = rng() % 2 ? pa::Split::kHarmless : pa::Split::kHelpful;
      int turns = static_cast<int>(rng() % 3) * 2;
      for (int t = 0; t <= turns; ++t) {
        r.context.push_back({t % 2 ? pa::Role::kAssistant : pa::Role::kHuman, text(5)});
      }
      r.chosen = "c" + text(6);
      r.rejected = "r" + text(6);
      if (rng() % 4 == 0) r.meta["source"] = text(3);
      records.push_back(std::move(r));
    }
    auto path = tmp / "ds.jsonl";
    pa::save_dataset(records, path);
    auto loaded = pa::load_dataset(path);
    ASSERT_EQ(loaded.records, records);
    ASSERT_EQ(pa::serialize_dataset(loaded.records), slurp(path));
  }
}
