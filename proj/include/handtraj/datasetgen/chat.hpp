#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "handtraj/common/error.hpp"
#include "handtraj/common/json_io.hpp"

namespace handtraj::datasetgen {

class ClientTimeout : public Error {
 public:
  using Error::Error;
};

class ClientRejection : public Error {
 public:
  using Error::Error;
};

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct ChatRequest {
  std::string model;
  double temperature = 0.0;
  std::vector<ChatMessage> messages;
  std::optional<std::string> image_url;  // attached to the last user message when set

  // {"model", "temperature", "messages": [{"role", "content"}]}; with an
  // image the last user content becomes [{"type":"text"}, {"type":"image_url"}].
  Json to_json() const;
  // Hash of the canonical request body; keys fixtures.
  std::string hash() const;
};

struct ChatClientConfig {
  std::string endpoint;  // http(s)://host[:port]/path
  std::string model = "gpt-4o";
  std::string api_key;
  double temperature = 0.0;
  double timeout_s = 30.0;
  int max_retries = 2;
  int backoff_ms = 500;
  double requests_per_second = 0.0;  // 0 disables rate limiting
  int max_in_flight = 1;
  bool offline_stub = false;
  std::string fixtures;  // stub replay file

  // Environment overrides: HANDTRAJ_CHAT_ENDPOINT, HANDTRAJ_CHAT_API_KEY.
  void apply_env();
  void validate() const;
  Json to_json() const;  // the API key is never serialized
  static ChatClientConfig from_json(const Json& j);
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Text of the first choice. Throws ClientTimeout or ClientRejection once
  // retries are exhausted.
  virtual std::string complete(const ChatRequest& request) = 0;
};

// POSTs the request body to the configured endpoint.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(ChatClientConfig cfg);
  std::string complete(const ChatRequest& request) override;

 private:
  ChatClientConfig cfg_;
  std::string scheme_host_;
  std::string path_;
  std::mutex rate_mu_;
  double next_slot_ = 0;
};

struct ChatFixture {
  std::string request_hash;
  Json request;
  std::string response;

  Json to_json() const;
  static ChatFixture from_json(const Json& j);
};

// Replays recorded responses keyed by request hash; unknown requests are
// rejected.
class StubChatClient : public ChatClient {
 public:
  explicit StubChatClient(std::vector<ChatFixture> fixtures);
  static StubChatClient from_file(const std::filesystem::path& path);
  std::string complete(const ChatRequest& request) override;

 private:
  std::map<std::string, std::string> responses_;
};

// Forwards to another client and keeps every exchange as a fixture.
class RecordingChatClient : public ChatClient {
 public:
  explicit RecordingChatClient(ChatClient& inner) : inner_(inner) {}
  std::string complete(const ChatRequest& request) override;
  // Sorted by request hash.
  std::vector<ChatFixture> fixtures() const;

 private:
  ChatClient& inner_;
  mutable std::mutex mu_;
  std::map<std::string, ChatFixture> log_;
};

void save_fixtures(const std::filesystem::path& path, const std::vector<ChatFixture>& fixtures);

// Stub when cfg.offline_stub (requires cfg.fixtures), live otherwise
// (requires an endpoint). Throws ConfigError when neither is usable.
std::unique_ptr<ChatClient> make_chat_client(const ChatClientConfig& cfg);

}  // namespace handtraj::datasetgen
