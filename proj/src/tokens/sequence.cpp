#include "handtraj/tokens/sequence.hpp"

#include <algorithm>

namespace handtraj::tokens {

std::vector<int> encode_prompt(const Vocabulary& vocab, const std::string& question) {
  std::vector<int> ids{vocab.bos()};
  for (int id : vocab.encode("USER: ")) ids.push_back(id);
  ids.push_back(vocab.image());
  for (int id : vocab.encode(", " + question + " ASSISTANT:")) ids.push_back(id);
  return ids;
}

TokenSequence tokenize_sample(const Vocabulary& vocab, const std::string& question, const std::string& answer,
                              const HandTrajectory& gt) {
  if (question.find(kHandMarker) != std::string::npos) {
    throw DataError("question must not contain hand tokens");
  }
  TokenSequence seq;
  seq.ids = encode_prompt(vocab, question);
  seq.prompt_length = seq.ids.size();
  seq.loss_mask.assign(seq.ids.size(), LossKind::kIgnore);

  std::size_t step = 0;
  for (int id : vocab.encode(" " + answer)) {
    if (id == vocab.hand()) {
      if (step < gt.horizon()) seq.hand_slots[seq.ids.size()] = gt.step(step);
      ++step;
      seq.loss_mask.push_back(LossKind::kHand);
    } else {
      seq.loss_mask.push_back(LossKind::kText);
    }
    seq.ids.push_back(id);
  }
  if (step != gt.horizon()) {
    throw HorizonMismatch("answer has " + std::to_string(step) + " hand tokens but the trajectory has " +
                          std::to_string(gt.horizon()) + " steps");
  }
  seq.ids.push_back(vocab.eos());
  seq.loss_mask.push_back(LossKind::kText);
  return seq;
}

ParsedGeneration parse_generated(const Vocabulary& vocab, std::span<const int> ids, std::span<const HandStep> steps) {
  ParsedGeneration out;
  std::size_t k = 0;
  std::vector<int> kept;
  for (int id : ids) {
    if (id == vocab.eos()) break;
    if (id == vocab.hand()) {
      if (k >= steps.size()) throw MalformedGeneration("<HAND> token " + std::to_string(k) + " has no decoded step");
      out.trajectory.push_back(steps[k++]);
    }
    if (id == vocab.hand() || !vocab.is_special(id)) kept.push_back(id);
  }
  out.text = vocab.decode(kept, true);
  out.plain_text = vocab.decode(kept, false);
  return out;
}

std::array<double, 6> hand_features(const HandStep& h) {
  std::array<double, 6> f{};
  if (h.left) {
    f[0] = h.left->x;
    f[1] = h.left->y;
    f[4] = 1.0;
  }
  if (h.right) {
    f[2] = h.right->x;
    f[3] = h.right->y;
    f[5] = 1.0;
  }
  return f;
}

HandStep hand_from_features(std::span<const double> f) {
  HandStep h;
  if (f[4] > 0) h.left = Point2{f[0], f[1]};
  if (f[5] > 0) h.right = Point2{f[2], f[3]};
  return h;
}

}  // namespace handtraj::tokens
