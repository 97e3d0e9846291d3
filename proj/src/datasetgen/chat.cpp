#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "handtraj/datasetgen/chat.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "handtraj/common/hash.hpp"

namespace handtraj::datasetgen {

Json ChatRequest::to_json() const {
  Json msgs = Json::array();
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& m = messages[i];
    const bool attach = image_url && m.role == "user" && i + 1 == messages.size();
    if (attach) {
      msgs.push_back({{"role", m.role},
                      {"content", Json::array({{{"type", "text"}, {"text", m.content}},
                                               {{"type", "image_url"}, {"image_url", {{"url", *image_url}}}}})}});
    } else {
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    }
  }
  return {{"model", model}, {"temperature", temperature}, {"messages", msgs}};
}

std::string ChatRequest::hash() const { return short_hash(to_json().dump()); }

void ChatClientConfig::apply_env() {
  if (const char* e = std::getenv("HANDTRAJ_CHAT_ENDPOINT"); e && *e) endpoint = e;
  if (const char* k = std::getenv("HANDTRAJ_CHAT_API_KEY"); k && *k) api_key = k;
}

void ChatClientConfig::validate() const {
  if (!(timeout_s > 0)) throw ConfigError("chat client: timeout must be positive");
  if (max_retries < 0) throw ConfigError("chat client: max_retries must be nonnegative");
  if (backoff_ms < 0) throw ConfigError("chat client: backoff_ms must be nonnegative");
  if (requests_per_second < 0) throw ConfigError("chat client: requests_per_second must be nonnegative");
  if (max_in_flight < 1) throw ConfigError("chat client: max_in_flight must be at least 1");
}

Json ChatClientConfig::to_json() const {
  return {{"endpoint", endpoint},       {"model", model},
          {"temperature", temperature}, {"timeout_s", timeout_s},
          {"max_retries", max_retries}, {"backoff_ms", backoff_ms},
          {"requests_per_second", requests_per_second}, {"max_in_flight", max_in_flight},
          {"offline_stub", offline_stub}, {"fixtures", fixtures}};
}

ChatClientConfig ChatClientConfig::from_json(const Json& j) {
  ChatClientConfig c;
  for (const auto& [key, value] : j.items()) {
    if (!c.to_json().contains(key)) throw ConfigError("chat client: unknown key '" + key + "'");
  }
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.model);
  c.temperature = j.value("temperature", c.temperature);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.offline_stub = j.value("offline_stub", c.offline_stub);
  c.fixtures = j.value("fixtures", c.fixtures);
  c.validate();
  return c;
}

HttpChatClient::HttpChatClient(ChatClientConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto scheme_end = cfg_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("chat endpoint '" + cfg_.endpoint + "' has no scheme");
  const auto scheme = cfg_.endpoint.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("chat endpoint scheme must be http or https");
  const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
  scheme_host_ = cfg_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
  if (scheme_host_.size() <= scheme_end + 3) throw ConfigError("chat endpoint has no host");
}

std::string HttpChatClient::complete(const ChatRequest& request) {
  const std::string body = request.to_json().dump();
  std::string last_error;
  bool timed_out = false;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms * attempt));
    if (cfg_.requests_per_second > 0) {
      std::unique_lock lock(rate_mu_);
      const double now = std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
      const double wait = next_slot_ - now;
      next_slot_ = std::max(now, next_slot_) + 1.0 / cfg_.requests_per_second;
      lock.unlock();
      if (wait > 0) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    httplib::Client cli(scheme_host_);
    const auto secs = std::chrono::duration<double>(cfg_.timeout_s);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    auto res = cli.Post(path_, headers, body, "application/json");
    if (!res) {
      timed_out = true;
      last_error = httplib::to_string(res.error());
      continue;
    }
    timed_out = false;
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ClientRejection("chat endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    try {
      const Json j = Json::parse(res->body);
      const Json& choice = j.at("choices").at(0);
      if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
      return choice.at("text").get<std::string>();
    } catch (const Json::exception& e) {
      throw ClientRejection(std::string("malformed chat response: ") + e.what());
    }
  }
  const std::string msg = "chat request failed after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error;
  if (timed_out) throw ClientTimeout(msg);
  throw ClientRejection(msg);
}

Json ChatFixture::to_json() const { return {{"request_hash", request_hash}, {"request", request}, {"response", response}}; }

ChatFixture ChatFixture::from_json(const Json& j) {
  try {
    return {j.at("request_hash").get<std::string>(), j.value("request", Json::object()), j.at("response").get<std::string>()};
  } catch (const Json::exception& e) {
    throw SchemaMismatch(std::string("chat fixture: ") + e.what());
  }
}

StubChatClient::StubChatClient(std::vector<ChatFixture> fixtures) {
  for (auto& f : fixtures) responses_[f.request_hash] = std::move(f.response);
}

StubChatClient StubChatClient::from_file(const std::filesystem::path& path) {
  std::vector<ChatFixture> fx;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    try {
      fx.push_back(ChatFixture::from_json(j));
    } catch (const DataError& e) {
      throw SchemaMismatch(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return StubChatClient(std::move(fx));
}

std::string StubChatClient::complete(const ChatRequest& request) {
  const auto h = request.hash();
  auto it = responses_.find(h);
  if (it == responses_.end()) throw ClientRejection("stub has no fixture for request " + h);
  return it->second;
}

std::string RecordingChatClient::complete(const ChatRequest& request) {
  std::string response = inner_.complete(request);
  std::lock_guard lock(mu_);
  log_[request.hash()] = ChatFixture{request.hash(), request.to_json(), response};
  return response;
}

std::vector<ChatFixture> RecordingChatClient::fixtures() const {
  std::lock_guard lock(mu_);
  std::vector<ChatFixture> out;
  for (const auto& [h, f] : log_) out.push_back(f);
  return out;
}

void save_fixtures(const std::filesystem::path& path, const std::vector<ChatFixture>& fixtures) {
  std::vector<Json> lines;
  for (const auto& f : fixtures) lines.push_back(f.to_json());
  write_jsonl(path, lines);
}

std::unique_ptr<ChatClient> make_chat_client(const ChatClientConfig& cfg) {
  cfg.validate();
  if (cfg.offline_stub) {
    if (cfg.fixtures.empty()) throw ConfigError("stub chat client needs a fixtures file");
    return std::make_unique<StubChatClient>(StubChatClient::from_file(cfg.fixtures));
  }
  if (cfg.endpoint.empty()) {
    throw ConfigError("no chat endpoint configured (set HANDTRAJ_CHAT_ENDPOINT or use the offline stub with fixtures)");
  }
  return std::make_unique<HttpChatClient>(cfg);
}

}  // namespace handtraj::datasetgen
