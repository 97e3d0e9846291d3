#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "handtraj/common/json_io.hpp"

namespace handtraj::tokens {

inline constexpr std::string_view kHandMarker = "<HAND>";

// Splits text into pieces: an optional leading space followed by a run of
// letters, digits or apostrophes, or else a single character.
std::vector<std::string> split_pieces(std::string_view text);

// Ids: [0, 256) raw bytes, then word pieces, then the special tokens.
// Unknown pieces fall back to bytes, so every string round-trips.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}
  explicit Vocabulary(std::vector<std::string> words);

  // Collects every piece occurring in `corpus`. "<HAND>" markers are not
  // text and are skipped.
  static Vocabulary build(std::span<const std::string> corpus);

  std::size_t size() const { return text_size() + 5; }
  std::size_t text_size() const { return 256 + words_.size(); }

  int pad() const { return static_cast<int>(text_size()); }
  int bos() const { return pad() + 1; }
  int eos() const { return pad() + 2; }
  int image() const { return pad() + 3; }
  int hand() const { return pad() + 4; }

  bool is_special(int id) const { return id >= pad(); }
  bool valid(int id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }

  // "<HAND>" markers in `text` become hand ids.
  std::vector<int> encode(std::string_view text) const;

  // Specials are rendered as "<pad>", "<bos>", "<eos>", "<image>", "<HAND>"
  // when `keep_special`, dropped otherwise.
  std::string decode(std::span<const int> ids, bool keep_special = true) const;

  std::string token_text(int id) const;

  const std::vector<std::string>& words() const { return words_; }

  Json to_json() const;
  static Vocabulary from_json(const Json& j);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> index_;
};

}  // namespace handtraj::tokens
