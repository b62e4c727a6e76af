#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "prefaudit/prefaudit.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = PREFAUDIT_TEST_DATA;

std::string take(char* s) {
  std::string out = s ? s : "";
  pa_string_free(s);
  return out;
}

struct Loaded {
  pa_dataset* dataset = nullptr;
  pa_matrix* matrix = nullptr;
  pa_votes* votes = nullptr;
  ~Loaded() {
    pa_votes_free(votes);
    pa_matrix_free(matrix);
    pa_dataset_free(dataset);
  }
};

void load_fixture(Loaded& l, const std::string& name) {
  ASSERT_EQ(pa_dataset_load((kData / name / "dataset.jsonl").c_str(), nullptr, 0, &l.dataset), PA_OK)
      << pa_last_error_message();
  ASSERT_EQ(pa_matrix_load((kData / name / "matrix.jsonl").c_str(), &l.matrix), PA_OK);
  ASSERT_EQ(pa_votes_compute(l.dataset, l.matrix, &l.votes), PA_OK);
}

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("prefaudit-capi-" + tag + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool accepting(int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  bool ok = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0;
  ::close(fd);
  return ok;
}

}  // namespace

TEST(CApi, Version) { EXPECT_STREQ(pa_version(), "0.3.0"); }

TEST(CApi, StatsMatchOracle) {
  Loaded l;
  load_fixture(l, "grouping");
  EXPECT_EQ(pa_dataset_size(l.dataset), 200u);
  EXPECT_EQ(pa_matrix_committee_size(l.matrix), 8u);
  char* js = nullptr;
  char* text = nullptr;
  ASSERT_EQ(pa_stats(l.dataset, l.votes, l.matrix, &js, &text), PA_OK);
  auto stats = json::parse(take(js));
  EXPECT_NE(take(text).find("harmless"), std::string::npos);

  std::ifstream in(kData / "grouping" / "expected_stats.json");
  auto expected = json::parse(in);
  EXPECT_TRUE(stats.contains("histogram"));
  auto dump = stats.dump();
  for (const char* split : {"harmless", "helpful"}) {
    auto n = expected[split]["n"].get<int>();
    EXPECT_NE(dump.find(std::to_string(n)), std::string::npos) << split;
  }

  char* hex = nullptr;
  ASSERT_EQ(pa_matrix_hash(l.matrix, &hex), PA_OK);
  std::ifstream h(kData / "grouping" / "expected_hash.txt");
  std::string want;
  h >> want;
  EXPECT_EQ(take(hex), want);
}

TEST(CApi, CleanSac10) {
  Loaded l;
  load_fixture(l, "sac10");
  pa_actions* actions = nullptr;
  ASSERT_EQ(pa_clean_plan(l.dataset, l.votes, l.matrix, "sac", nullptr, &actions), PA_OK);
  EXPECT_EQ(pa_actions_size(actions), 10u);
  auto dir = temp_dir("clean");
  char* report = nullptr;
  ASSERT_EQ(pa_clean_materialize(l.dataset, l.votes, actions, R"({"strategy":"sac"})",
                                 (dir / "cleaned.jsonl").c_str(), nullptr, nullptr, nullptr, &report),
            PA_OK);
  auto r = json::parse(take(report));
  EXPECT_EQ(r["totals"]["keep"], 5);
  EXPECT_EQ(r["totals"]["flip"], 2);
  EXPECT_EQ(r["totals"]["remove"], 3);
  EXPECT_EQ(r["output_size"], 7);
  EXPECT_TRUE(fs::exists(dir / "cleaned.jsonl"));
  pa_actions_free(actions);
  fs::remove_all(dir);
}

TEST(CApi, ErrorsCarryCodeAndJson) {
  pa_dataset* ds = nullptr;
  EXPECT_EQ(pa_dataset_load("/definitely/not/here.jsonl", nullptr, 0, &ds), PA_E_IO);
  EXPECT_EQ(ds, nullptr);
  auto err = json::parse(pa_last_error_json());
  EXPECT_EQ(err["error"], "Io");
  EXPECT_EQ(err["code"], PA_E_IO);
  EXPECT_FALSE(std::string(pa_last_error_message()).empty());
  EXPECT_STREQ(pa_status_name(PA_E_UNKNOWN_STRATEGY), "UnknownStrategy");

  Loaded l;
  load_fixture(l, "sac10");
  pa_actions* actions = nullptr;
  EXPECT_EQ(pa_clean_plan(l.dataset, l.votes, l.matrix, "magic", nullptr, &actions), PA_E_UNKNOWN_STRATEGY);
  EXPECT_EQ(pa_clean_plan(l.dataset, l.votes, l.matrix, "gen_rm_r", nullptr, &actions), PA_E_MISSING_AUX);
  EXPECT_EQ(pa_clean_plan(l.dataset, l.votes, l.matrix, "sac", "{bad", &actions), PA_E_INVALID_ARGUMENT);
  EXPECT_EQ(pa_strategy_known("fnl"), 1);
  EXPECT_EQ(pa_strategy_known("magic"), 0);
  EXPECT_EQ(pa_dataset_size(nullptr), 0u);
}

TEST(CApi, KappaAndGroups) {
  const int counts[] = {2, 1, 0, 3};
  double kappa = 0;
  int flag = -1;
  ASSERT_EQ(pa_fleiss_kappa(counts, 2, 2, 3, &kappa, &flag), PA_OK);
  EXPECT_NEAR(kappa, 0.25, 1e-12);
  EXPECT_EQ(flag, 0);
  const int bad[] = {2, 0};
  EXPECT_EQ(pa_fleiss_kappa(bad, 1, 2, 3, &kappa, &flag), PA_E_INVALID_TABLE);

  int g = -1;
  ASSERT_EQ(pa_vote_group(0, 8, &g), PA_OK);
  EXPECT_EQ(g, 0);
  pa_vote_group(3, 8, &g);
  EXPECT_EQ(g, 1);
  pa_vote_group(4, 8, &g);
  EXPECT_EQ(g, 2);
  pa_vote_group(8, 8, &g);
  EXPECT_EQ(g, 3);
  EXPECT_EQ(pa_vote_group(9, 8, &g), PA_E_OUT_OF_RANGE);
}

TEST(CApi, JudgeReplyAndTranscript) {
  double a = 0, b = 0;
  ASSERT_EQ(pa_parse_judge_reply("7 4\nbecause", &a, &b), PA_OK);
  EXPECT_EQ(a, 7);
  EXPECT_EQ(b, 4);
  EXPECT_EQ(pa_parse_judge_reply("11 3", &a, &b), PA_E_JUDGE_RANGE);
  EXPECT_EQ(pa_parse_judge_reply("Sure! 7 4", &a, &b), PA_E_JUDGE_PARSE);

  char* js = nullptr;
  ASSERT_EQ(pa_parse_transcript("\n\nHuman: hi\n\nAssistant: hello", nullptr, &js), PA_OK);
  auto turns = json::parse(take(js));
  ASSERT_EQ(turns.size(), 2u);
  EXPECT_EQ(turns[1]["role"], "assistant");
}

TEST(CApi, EvalAndReviewLifecycle) {
  auto dir = temp_dir("eval");
  {
    std::ofstream out(dir / "j.jsonl");
    out << R"({"prompt_id":"a","score_a":7,"score_b":4})" << "\n"
        << R"({"prompt_id":"b","score_a":5,"score_b":5})" << "\n"
        << R"({"prompt_id":"c","score_a":3,"score_b":6})" << "\n";
  }
  char* js = nullptr;
  char* text = nullptr;
  ASSERT_EQ(pa_eval((dir / "j.jsonl").c_str(), nullptr, nullptr, &js, &text), PA_OK);
  auto r = json::parse(take(js));
  take(text);
  EXPECT_EQ(r["tally"]["wins"], 1);
  EXPECT_EQ(r["tally"]["ties"], 1);
  EXPECT_EQ(r["tally"]["losses"], 1);
  EXPECT_EQ(pa_eval(nullptr, nullptr, nullptr, &js, &text), PA_E_INVALID_ARGUMENT);

  Loaded l;
  load_fixture(l, "sac10");
  pa_review* review = nullptr;
  json options{{"log", (dir / "log.jsonl").string()}};
  ASSERT_EQ(pa_review_create(l.dataset, l.votes, options.dump().c_str(), &review), PA_OK);
  int port = 0;
  ASSERT_EQ(pa_review_bind(review, "127.0.0.1", 0, &port), PA_OK);
  EXPECT_GT(port, 0);
  std::thread serving([&] { pa_review_serve(review); });
  for (int i = 0; i < 200 && !accepting(port); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  EXPECT_TRUE(accepting(port));
  pa_review_stop(review);
  serving.join();
  pa_review_free(review);
  EXPECT_EQ(pa_review_create(l.dataset, l.votes, "{}", &review), PA_E_INVALID_ARGUMENT);
  fs::remove_all(dir);
}

TEST(CApi, StopBeforeServeReturns) {
  auto dir = temp_dir("stop");
  Loaded l;
  load_fixture(l, "sac10");
  pa_review* review = nullptr;
  json options{{"log", (dir / "log.jsonl").string()}};
  ASSERT_EQ(pa_review_create(l.dataset, l.votes, options.dump().c_str(), &review), PA_OK);
  int port = 0;
  ASSERT_EQ(pa_review_bind(review, "127.0.0.1", 0, &port), PA_OK);
  pa_review_stop(review);
  EXPECT_EQ(pa_review_serve(review), PA_OK);
  pa_review_free(review);
  fs::remove_all(dir);
}
