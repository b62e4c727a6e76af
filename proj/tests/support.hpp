#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <httplib.h>

#include "prefaudit/dataset.hpp"
#include "prefaudit/scoring.hpp"
#include "prefaudit/voting.hpp"

namespace testing_support {

namespace fs = std::filesystem;
namespace pa = prefaudit;

inline fs::path data_dir() { return fs::path(PREFAUDIT_TEST_DATA); }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("prefaudit-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline pa::PreferenceRecord make_record(const std::string& id, pa::Split split, int i = 0) {
  pa::PreferenceRecord r;
  r.id = id;
  r.split = split;
  r.context = {{pa::Role::kHuman, "question " + std::to_string(i)}};
  r.chosen = "chosen " + std::to_string(i);
  r.rejected = "rejected " + std::to_string(i);
  return r;
}

// Committee of `m` scorers where record i gets exactly votes[i] agreements.
inline pa::ScoreMatrix matrix_for_votes(const pa::Dataset& ds, const std::vector<int>& votes, int m) {
  pa::ScoreMatrix matrix;
  for (int j = 0; j < m; ++j) matrix.scorers.push_back({"rm" + std::to_string(j), pa::ScorerKind::kFile});
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    std::vector<pa::ScorePair> row;
    for (int j = 0; j < m; ++j) row.push_back(j < votes[i] ? pa::ScorePair{1.0, 0.0} : pa::ScorePair{0.0, 1.0});
    matrix.entries[ds.records[i].id] = std::move(row);
  }
  return matrix;
}

inline pa::Dataset dataset_for_votes(const std::vector<int>& votes, pa::Split split = pa::Split::kHarmless,
                                     const std::string& prefix = "r") {
  pa::Dataset ds;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s-%03zu", prefix.c_str(), i);
    ds.records.push_back(make_record(id, split, static_cast<int>(i)));
  }
  return ds;
}

struct Generated {
  pa::Dataset dataset;
  pa::ScoreMatrix matrix;
};

// Random dataset with a random committee. Integer rewards make ties frequent;
// continuous ones make them (almost surely) absent.
inline Generated generate(std::mt19937_64& rng, int n, int m, bool integer_rewards = true) {
  Generated g;
  std::uniform_int_distribution<int> split(0, 1);
  std::uniform_int_distribution<int> reward(-3, 3);
  std::uniform_int_distribution<int> bias(-4, 4);
  for (int j = 0; j < m; ++j) g.matrix.scorers.push_back({"s" + std::to_string(j), pa::ScorerKind::kFile});
  for (int i = 0; i < n; ++i) {
    auto rec = make_record("x-" + std::to_string(i), split(rng) ? pa::Split::kHelpful : pa::Split::kHarmless, i);
    int b = bias(rng);
    std::vector<pa::ScorePair> row;
    for (int j = 0; j < m; ++j) {
      if (integer_rewards) {
        row.push_back({double(reward(rng) + b), double(reward(rng))});
      } else {
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        row.push_back({u(rng) + b, u(rng)});
      }
    }
    g.matrix.entries[rec.id] = std::move(row);
    g.dataset.records.push_back(std::move(rec));
  }
  return g;
}

// In-process HTTP server on an ephemeral port.
class StubServer {
 public:
  explicit StubServer(std::function<void(httplib::Server&)> routes) {
    routes(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  int port() const { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace testing_support
