#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "handtraj/common/error.hpp"
#include "handtraj/common/types.hpp"
#include "handtraj/tokens/vocab.hpp"

namespace handtraj::tokens {

class MalformedGeneration : public DataError {
 public:
  using DataError::DataError;
};

enum class LossKind : std::uint8_t { kIgnore, kText, kHand };

struct TokenSequence {
  std::vector<int> ids;
  std::map<std::size_t, HandStep> hand_slots;  // teacher-forcing values at <HAND> ids
  std::vector<LossKind> loss_mask;
  std::size_t prompt_length = 0;  // ids before the first answer token

  std::size_t size() const { return ids.size(); }
  std::span<const int> prompt() const { return std::span<const int>(ids).first(prompt_length); }
  std::span<const int> answer() const { return std::span<const int>(ids).subspan(prompt_length); }
};

// <bos> "USER: " <image> ", {question} ASSISTANT:" " {answer}" <eos>
std::vector<int> encode_prompt(const Vocabulary& vocab, const std::string& question);

// Answer text and <eos> are `text`, <HAND> positions `hand`, the prompt
// `ignore`. Throws HorizonMismatch if the answer's <HAND> count differs from
// the trajectory horizon.
TokenSequence tokenize_sample(const Vocabulary& vocab, const std::string& question, const std::string& answer,
                              const HandTrajectory& gt);

struct ParsedGeneration {
  std::string text;         // answer text with <HAND> markers
  std::string plain_text;   // special tokens removed
  HandTrajectory trajectory;
};

// `ids` are the generated answer ids; `steps` the decoded hand step for each
// <HAND> id in order.
ParsedGeneration parse_generated(const Vocabulary& vocab, std::span<const int> ids, std::span<const HandStep> steps);

// (xl, yl, xr, yr, vl, vr); an absent side contributes zeros.
std::array<double, 6> hand_features(const HandStep& h);

// Inverse of hand_features for decoded outputs: a side is present when its
// validity value is positive.
HandStep hand_from_features(std::span<const double> f);

}  // namespace handtraj::tokens
