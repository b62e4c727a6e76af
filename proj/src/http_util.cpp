#include "http_util.hpp"

#include <thread>

#include <httplib.h>

namespace prefaudit::detail {

using nlohmann::json;

BaseUrl parse_base_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos || url.substr(0, scheme_end) != "http") {
    throw Error(ErrorCode::kInvalidArgument,
                "endpoint URL must start with http:// (got '" + std::string(url) + "')");
  }
  auto path_start = url.find('/', scheme_end + 3);
  BaseUrl out;
  out.scheme_host_port = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) {
    out.path_prefix = std::string(url.substr(path_start));
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  if (out.scheme_host_port.size() <= scheme_end + 3) {
    throw Error(ErrorCode::kInvalidArgument, "endpoint URL has no host: " + std::string(url));
  }
  return out;
}

json post_json(const BaseUrl& base, const std::string& path, const json& body,
               const RetryPolicy& retry, std::chrono::milliseconds timeout, ErrorCode failure,
               std::atomic<std::size_t>* request_counter) {
  const auto target = base.path_prefix + path;
  const auto payload = body.dump();
  auto backoff = retry.initial_backoff;
  std::string last_cause;

  for (int attempt = 1; attempt <= std::max(1, retry.attempts); ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * retry.multiplier));
    }
    httplib::Client client(base.scheme_host_port);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    if (request_counter) ++*request_counter;
    auto result = client.Post(target, payload, "application/json");
    if (!result) {
      last_cause = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 500) {
      last_cause = "HTTP " + std::to_string(result->status);
      continue;
    }
    if (result->status < 200 || result->status >= 300) {
      throw Error(failure,
                  base.scheme_host_port + target + " answered HTTP " +
                      std::to_string(result->status),
                  {{"url", base.scheme_host_port + target}, {"status", result->status}});
    }
    json reply = json::parse(result->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object()) {
      throw Error(failure, base.scheme_host_port + target + " returned a non-JSON-object body",
                  {{"url", base.scheme_host_port + target}});
    }
    return reply;
  }
  throw Error(failure,
              base.scheme_host_port + target + " unavailable after " +
                  std::to_string(retry.attempts) + " attempts (" + last_cause + ")",
              {{"url", base.scheme_host_port + target}, {"attempts", retry.attempts},
               {"cause", last_cause}});
}

}  // namespace prefaudit::detail
