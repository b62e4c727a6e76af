#include "prefaudit/review.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>

#include <unistd.h>

#include <httplib.h>

#include "io_util.hpp"
#include "prefaudit/error.hpp"

namespace prefaudit {

using nlohmann::json;

std::optional<QueuePolicy> parse_queue_policy(std::string_view text) noexcept {
  if (text == "default" || text == "disagreement") return QueuePolicy::kDisagreement;
  if (text == "all") return QueuePolicy::kAll;
  return std::nullopt;
}

std::vector<ReviewItem> build_queue(const Dataset& dataset, std::span<const VoteRecord> votes,
                                    QueuePolicy policy) {
  auto index = index_votes(votes);
  std::vector<ReviewItem> items;
  for (const auto& record : dataset.records) {
    auto it = index.find(record.id);
    if (it == index.end()) {
      throw Error(ErrorCode::kMissingVote, "record '" + record.id + "' has no vote",
                  {{"record_id", record.id}});
    }
    const auto& v = *it->second;
    if (policy == QueuePolicy::kDisagreement && v.group != Group::kNoAgree &&
        v.group != Group::kLowAgree) {
      continue;
    }
    items.push_back({record.id, v, 0});
  }

  if (policy == QueuePolicy::kDisagreement) {
    // NoAgree sorts first because v = 0 is the smallest vote.
    std::sort(items.begin(), items.end(), [](const ReviewItem& a, const ReviewItem& b) {
      return std::tie(a.vote.v, a.record_id) < std::tie(b.vote.v, b.record_id);
    });
  } else {
    // |v - M/2| doubled to stay in integers.
    auto distance = [](const ReviewItem& item) {
      return std::abs(2 * item.vote.v - item.vote.committee_size());
    };
    std::sort(items.begin(), items.end(), [&](const ReviewItem& a, const ReviewItem& b) {
      auto da = distance(a), db = distance(b);
      return da != db ? da < db : a.record_id < b.record_id;
    });
  }
  for (std::size_t i = 0; i < items.size(); ++i) items[i].priority = static_cast<int>(i);
  return items;
}

ReviewService::ReviewService(Dataset dataset, std::vector<VoteRecord> votes,
                             ReviewOptions options)
    : dataset_(std::move(dataset)), votes_(std::move(votes)), options_(std::move(options)) {
  if (options_.log_path.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "review service needs a decision log path");
  }
  queue_ = build_queue(dataset_, votes_, options_.policy);
  for (std::size_t i = 0; i < dataset_.records.size(); ++i) {
    record_index_.emplace(dataset_.records[i].id, i);
  }
  for (std::size_t i = 0; i < votes_.size(); ++i) vote_index_.emplace(votes_[i].record_id, i);
  for (const auto& item : queue_) queue_priority_.emplace(item.record_id, item.priority);

  if (std::filesystem::exists(options_.log_path)) {
    for (auto& d : load_annotations(options_.log_path, /*allow_uncertain=*/true)) {
      if (!record_index_.contains(d.record_id)) {
        throw Error(ErrorCode::kUnknownRecord,
                    "decision log references unknown record '" + d.record_id + "'",
                    {{"record_id", d.record_id}});
      }
      auto it = latest_.find(d.record_id);
      if (it == latest_.end() || d.timestamp_ms >= it->second.timestamp_ms) {
        latest_[d.record_id] = std::move(d);
      }
    }
  }
  log_ = std::fopen(options_.log_path.c_str(), "a");
  if (!log_) {
    throw Error(ErrorCode::kIo, "cannot open decision log " + options_.log_path.string());
  }
}

ReviewService::~ReviewService() {
  if (log_) std::fclose(log_);
}

json ReviewService::item_json(const PreferenceRecord& record, const VoteRecord& vote,
                              std::optional<int> priority) const {
  json context = json::array();
  for (const auto& t : record.context) context.push_back({{"role", to_string(t.role)}, {"text", t.text}});
  json bits = json::array();
  for (bool a : vote.agreements) bits.push_back(a ? 1 : 0);
  json item{{"record_id", record.id},
            {"split", to_string(record.split)},
            {"context", std::move(context)},
            {"chosen", record.chosen},
            {"rejected", record.rejected},
            {"vote",
             {{"v", vote.v},
              {"committee_size", vote.committee_size()},
              {"group", to_string(vote.group)},
              {"agreements", std::move(bits)}}},
            {"priority", priority ? json(*priority) : json(nullptr)},
            {"queued", priority.has_value()},
            {"status", latest_.contains(record.id) ? "decided" : "pending"}};
  if (auto it = latest_.find(record.id); it != latest_.end()) {
    item["decision"] = annotation_json(it->second);
  }
  return item;
}

ServiceReply ReviewService::next_item() const {
  std::lock_guard lock(mutex_);
  for (const auto& item : queue_) {
    if (latest_.contains(item.record_id)) continue;
    const auto& record = dataset_.records[record_index_.at(item.record_id)];
    return {200, item_json(record, item.vote, item.priority)};
  }
  return {204, nullptr};
}

ServiceReply ReviewService::record(std::string_view record_id) const {
  std::lock_guard lock(mutex_);
  auto it = record_index_.find(std::string(record_id));
  if (it == record_index_.end()) {
    return {404, {{"error", "UnknownRecord"}, {"record_id", record_id}}};
  }
  const auto& vote = votes_[vote_index_.at(it->first)];
  std::optional<int> priority;
  if (auto q = queue_priority_.find(it->first); q != queue_priority_.end()) priority = q->second;
  return {200, item_json(dataset_.records[it->second], vote, priority)};
}

void ReviewService::append_to_log(const ReviewDecision& decision) {
  auto line = serialize_annotation(decision) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0 ||
      ::fsync(::fileno(log_)) != 0) {
    throw Error(ErrorCode::kIo, "failed to append to " + options_.log_path.string());
  }
}

ServiceReply ReviewService::post_decision(std::string_view body) {
  json row = json::parse(body, nullptr, false);
  if (row.is_discarded() || !row.is_object()) {
    return {422, {{"error", "SchemaViolation"}, {"message", "body must be a JSON object"}}};
  }
  const bool client_timestamp = row.contains("timestamp") && !row["timestamp"].is_null();
  if (!client_timestamp) {
    auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
    row["timestamp"] = detail::format_timestamp_ms(now);
  }
  if (!row.contains("annotator") && !row.contains("reviewer")) row["annotator"] = "reviewer";

  ReviewDecision decision;
  try {
    decision = parse_annotation(row, /*allow_uncertain=*/true);
  } catch (const Error& e) {
    return {422, e.to_json()};
  }

  std::lock_guard lock(mutex_);
  if (!record_index_.contains(decision.record_id)) {
    return {404, {{"error", "UnknownRecord"}, {"record_id", decision.record_id}}};
  }
  if (options_.strict && !queue_priority_.contains(decision.record_id)) {
    return {409,
            {{"error", "NotQueued"},
             {"record_id", decision.record_id},
             {"message", "record is not in the review queue"}}};
  }
  if (auto it = latest_.find(decision.record_id); it != latest_.end()) {
    const auto& prev = it->second;
    const bool same = prev.label == decision.label && prev.explanation == decision.explanation &&
                      prev.source_tags == decision.source_tags &&
                      prev.annotator == decision.annotator &&
                      (!client_timestamp || prev.timestamp == decision.timestamp);
    if (same) return {200, {{"status", "duplicate"}, {"decision", annotation_json(prev)}}};
  }
  try {
    append_to_log(decision);
  } catch (const Error& e) {
    return {500, e.to_json()};
  }
  auto it = latest_.find(decision.record_id);
  if (it == latest_.end() || decision.timestamp_ms >= it->second.timestamp_ms) {
    latest_[decision.record_id] = decision;
  }
  return {201, {{"status", "recorded"}, {"decision", annotation_json(decision)}}};
}

ServiceReply ReviewService::stats() const {
  std::lock_guard lock(mutex_);
  std::size_t pending = 0;
  for (const auto& item : queue_) {
    if (!latest_.contains(item.record_id)) ++pending;
  }
  json histogram = json::object();
  for (auto l : {Label::kChosenBetter, Label::kRejectedBetter, Label::kBothGood, Label::kBothBad,
                 Label::kUncertain}) {
    histogram[std::string(to_string(l))] = 0;
  }
  for (const auto& [id, d] : latest_) {
    histogram[std::string(to_string(d.label))] = histogram[std::string(to_string(d.label))].get<int>() + 1;
  }
  return {200,
          {{"pending", pending},
           {"decided", latest_.size()},
           {"queued", queue_.size()},
           {"label_histogram", std::move(histogram)}}};
}

// --- HTTP --------------------------------------------------------------------

namespace {

void send(httplib::Response& res, const ServiceReply& reply) {
  res.status = reply.status;
  if (reply.status != 204) res.set_content(reply.body.dump(), "application/json");
}

}  // namespace

ReviewServer::ReviewServer(ReviewService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  const auto& options = service_.options();
  server_->set_default_headers({
      {"Access-Control-Allow-Origin", options.cors_origin},
      {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
      {"Access-Control-Allow-Headers", "Content-Type, Authorization"},
  });

  server_->set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (req.method == "OPTIONS") {
      res.status = 204;
      return httplib::Server::HandlerResponse::Handled;
    }
    const auto& token = service_.options().bearer_token;
    if (token && req.path != "/health" &&
        req.get_header_value("Authorization") != "Bearer " + *token) {
      res.status = 401;
      res.set_content(R"({"error":"Unauthorized"})", "application/json");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  server_->Get("/queue/next", [this](const httplib::Request&, httplib::Response& res) {
    send(res, service_.next_item());
  });
  server_->Post("/decisions", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.post_decision(req.body));
  });
  server_->Get(R"(/records/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.record(req.matches[1].str()));
  });
  server_->Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
    send(res, service_.stats());
  });
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) {
    int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

bool ReviewServer::listen_after_bind() {
  {
    std::lock_guard lock(state_mutex_);
    if (stop_requested_) return false;
    started_ = true;
  }
  return server_->listen_after_bind();
}

void ReviewServer::stop() {
  if (!server_) return;
  // httplib ignores a stop that arrives before its accept loop is running.
  bool started;
  {
    std::lock_guard lock(state_mutex_);
    stop_requested_ = true;
    started = started_;
  }
  if (started) server_->wait_until_ready();
  server_->stop();
}

}  // namespace prefaudit
