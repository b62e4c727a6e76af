#pragma once

#include <atomic>
#include <chrono>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "prefaudit/error.hpp"
#include "prefaudit/scoring.hpp"

namespace prefaudit::detail {

struct BaseUrl {
  std::string scheme_host_port;  // "http://host:port"
  std::string path_prefix;       // "" or "/v1"
};

BaseUrl parse_base_url(std::string_view url);

/// POSTs `body` as JSON and returns the parsed JSON reply. Connection errors
/// and 5xx responses are retried with exponential backoff; anything else, or
/// exhausting the attempts, raises `failure` with the last cause.
nlohmann::json post_json(const BaseUrl& base, const std::string& path, const nlohmann::json& body,
                         const RetryPolicy& retry, std::chrono::milliseconds timeout,
                         ErrorCode failure, std::atomic<std::size_t>* request_counter = nullptr);

}  // namespace prefaudit::detail
