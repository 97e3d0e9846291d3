#include "handtraj/tokens/vocab.hpp"

#include <algorithm>
#include <set>

#include "handtraj/common/error.hpp"

namespace handtraj::tokens {

namespace {

bool word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || (u >= '0' && u <= '9') || u == '\'';
}

constexpr const char* kSpecialNames[] = {"<pad>", "<bos>", "<eos>", "<image>", "<HAND>"};

}  // namespace

std::vector<std::string> split_pieces(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    if (text[j] == ' ' && j + 1 < text.size() && word_char(text[j + 1])) ++j;
    if (word_char(text[j])) {
      while (j < text.size() && word_char(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
    } else {
      out.emplace_back(text.substr(i, 1));
      j = i + 1;
    }
    i = j;
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].size() <= 1) throw ConfigError("vocabulary word pieces must be longer than one byte");
    if (!index_.emplace(words_[i], static_cast<int>(256 + i)).second) {
      throw ConfigError("duplicate vocabulary piece '" + words_[i] + "'");
    }
  }
}

namespace {

// Text segments between "<HAND>" markers.
template <typename Fn>
void for_each_segment(std::string_view text, Fn&& fn) {
  std::size_t pos = 0;
  while (true) {
    const std::size_t m = text.find(kHandMarker, pos);
    fn(text.substr(pos, m == std::string_view::npos ? std::string_view::npos : m - pos), m != std::string_view::npos);
    if (m == std::string_view::npos) break;
    pos = m + kHandMarker.size();
  }
}

}  // namespace

Vocabulary Vocabulary::build(std::span<const std::string> corpus) {
  std::set<std::string> seen;
  for (const auto& text : corpus) {
    for_each_segment(text, [&](std::string_view seg, bool) {
      for (auto& p : split_pieces(seg))
        if (p.size() > 1) seen.insert(std::move(p));
    });
  }
  return Vocabulary(std::vector<std::string>(seen.begin(), seen.end()));
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for_each_segment(text, [&](std::string_view seg, bool marker_follows) {
    for (const auto& p : split_pieces(seg)) {
      auto it = index_.find(p);
      if (it != index_.end()) {
        ids.push_back(it->second);
      } else {
        for (char c : p) ids.push_back(static_cast<unsigned char>(c));
      }
    }
    if (marker_follows) ids.push_back(hand());
  });
  return ids;
}

std::string Vocabulary::token_text(int id) const {
  if (!valid(id)) throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  if (id < 256) return std::string(1, static_cast<char>(id));
  if (static_cast<std::size_t>(id) < text_size()) return words_[id - 256];
  return kSpecialNames[id - pad()];
}

std::string Vocabulary::decode(std::span<const int> ids, bool keep_special) const {
  std::string out;
  for (int id : ids) {
    if (is_special(id) && !keep_special) continue;
    out += token_text(id);
  }
  return out;
}

Json Vocabulary::to_json() const { return {{"words", words_}, {"byte_fallback", 256}}; }

Vocabulary Vocabulary::from_json(const Json& j) {
  return Vocabulary(require(j, "words", "vocabulary").get<std::vector<std::string>>());
}

}  // namespace handtraj::tokens
