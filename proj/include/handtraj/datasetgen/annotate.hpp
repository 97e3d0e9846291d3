#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "handtraj/datasetgen/chat.hpp"
#include "handtraj/datasetgen/qa.hpp"
#include "handtraj/gt/pipeline.hpp"

namespace handtraj::datasetgen {

extern const char* const kDescribeSystemPrompt;
extern const char* const kImplicitSystemPrompt;

class ValidationFailed : public DataError {
 public:
  ValidationFailed(std::string reason, Json transcript)
      : DataError("implicit question rejected: " + reason), reason_(std::move(reason)),
        transcript_(std::move(transcript)) {}
  const std::string& reason() const { return reason_; }  // "leaked action" | "format"
  const Json& transcript() const { return transcript_; }

 private:
  std::string reason_;
  Json transcript_;
};

struct Annotation {
  std::string text;
  Json transcript;  // {"request", "response"}
};

std::string transcript_hash(const Json& transcript);

// "clips/<clip_id>/frame_<n>" for the last observation frame.
std::string frame_reference(const std::string& clip_id, int frame);

ChatRequest describe_request(const std::string& image_ref, const std::string& action, const ChatClientConfig& cfg);
ChatRequest implicit_request(const std::string& description, const std::string& action, const ChatClientConfig& cfg);

Annotation describe_scene(const std::string& image_ref, const std::string& action, ChatClient& client,
                          const ChatClientConfig& cfg);

// True when `question` contains the whole action phrase, or words sharing a
// stem with both the first and the last content word of the action
// (case-insensitive; fillers such as "the" and "up" are skipped).
bool leaks_action(const std::string& question, const std::string& action);

// Validated: must open with an implicit prefix and must not leak the action.
Annotation gen_implicit(const std::string& description, const std::string& action, ChatClient& client,
                        const ChatClientConfig& cfg, const tokens::TemplateBank& bank = tokens::TemplateBank::builtin());

// Per-clip stream for template choices, independent of dataset order.
Rng clip_rng(std::uint64_t seed, const std::string& clip_id);

// One sample per GT record, sorted by clip id.
std::vector<QASample> gen_vhp(std::span<const gt::GtSample> gt, std::uint64_t seed,
                              const tokens::TemplateBank& bank = tokens::TemplateBank::builtin());

struct RbhpFailure {
  std::string clip_id;
  std::string reason;
  Json transcript;
};

struct RbhpResult {
  std::vector<QASample> samples;  // sorted by clip id
  std::vector<RbhpFailure> failures;
};

// Describe -> implicit question -> template, for GT records with a
// narration. Up to cfg.max_in_flight clips are annotated concurrently.
RbhpResult gen_rbhp(std::span<const gt::GtSample> gt, ChatClient& client, const ChatClientConfig& cfg,
                    std::uint64_t seed, const tokens::TemplateBank& bank = tokens::TemplateBank::builtin());

}  // namespace handtraj::datasetgen
