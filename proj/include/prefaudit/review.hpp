#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefaudit/annotation.hpp"
#include "prefaudit/dataset.hpp"
#include "prefaudit/voting.hpp"

namespace httplib {
class Server;
}

namespace prefaudit {

enum class QueuePolicy {
  // NoAgree then LowAgree, each by ascending v then id.
  kDisagreement,
  // Everything, hardest first: ascending |v - M/2|, then id.
  kAll,
};

std::optional<QueuePolicy> parse_queue_policy(std::string_view text) noexcept;

struct ReviewItem {
  std::string record_id;
  VoteRecord vote;
  int priority = 0;  // 0 is reviewed first
};

std::vector<ReviewItem> build_queue(const Dataset& dataset, std::span<const VoteRecord> votes,
                                    QueuePolicy policy = QueuePolicy::kDisagreement);

struct ReviewOptions {
  std::filesystem::path log_path;
  QueuePolicy policy = QueuePolicy::kDisagreement;
  // Reject decisions for records that are not queued (409).
  bool strict = true;
  std::optional<std::string> bearer_token;
  std::string cors_origin = "*";
};

struct ServiceReply {
  int status = 200;
  nlohmann::json body;
};

/// Queue state and the append-only decision log. Every method is safe to call
/// from concurrent request handlers; log appends are serialized and flushed to
/// disk before a decision is acknowledged.
class ReviewService {
 public:
  /// Replays any existing log at `options.log_path`.
  ReviewService(Dataset dataset, std::vector<VoteRecord> votes, ReviewOptions options);
  ~ReviewService();

  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  ServiceReply next_item() const;
  ServiceReply record(std::string_view record_id) const;
  ServiceReply post_decision(std::string_view body);
  ServiceReply stats() const;

  const ReviewOptions& options() const noexcept { return options_; }
  std::size_t queue_size() const noexcept { return queue_.size(); }

 private:
  nlohmann::json item_json(const PreferenceRecord& record, const VoteRecord& vote,
                           std::optional<int> priority) const;
  void append_to_log(const ReviewDecision& decision);

  Dataset dataset_;
  std::vector<VoteRecord> votes_;
  ReviewOptions options_;
  std::vector<ReviewItem> queue_;
  std::map<std::string, std::size_t> record_index_;
  std::map<std::string, std::size_t> vote_index_;
  std::map<std::string, int> queue_priority_;

  mutable std::mutex mutex_;
  std::map<std::string, ReviewDecision> latest_;
  std::FILE* log_ = nullptr;
};

/// HTTP front end: GET /queue/next, POST /decisions, GET /records/{id},
/// GET /stats, GET /health. CORS headers on every response.
class ReviewServer {
 public:
  explicit ReviewServer(ReviewService& service);
  ~ReviewServer();

  /// Binds without serving; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen_after_bind();
  void stop();

 private:
  ReviewService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex state_mutex_;
  bool started_ = false;
  bool stop_requested_ = false;
};

}  // namespace prefaudit
