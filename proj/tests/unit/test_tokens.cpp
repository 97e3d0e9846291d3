#include <doctest.h>

#include <algorithm>
#include <set>

#include "handtraj/common/rng.hpp"
#include "handtraj/tokens/hand_embedding.hpp"
#include "handtraj/tokens/sequence.hpp"
#include "handtraj/tokens/templates.hpp"
#include "handtraj/tokens/vocab.hpp"

using namespace handtraj;
using namespace handtraj::tokens;

namespace {

std::size_t count_markers(const std::string& s) {
  std::size_t n = 0;
  for (std::size_t p = s.find("<HAND>"); p != std::string::npos; p = s.find("<HAND>", p + 1)) ++n;
  return n;
}

HandTrajectory traj(std::size_t n) {
  HandTrajectory t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.at(Side::kRight, i) = Point2{0.1 * i, 0.2};
    if (i % 2 == 0) t.at(Side::kLeft, i) = Point2{0.5, 0.05 * i};
  }
  return t;
}

Vocabulary corpus_vocab() {
  const std::vector<std::string> corpus{"USER: , open the microwave? ASSISTANT:", " Sure, it is <HAND><HAND>."};
  return Vocabulary::build(corpus);
}

}  // namespace

TEST_CASE("piece splitting") {
  CHECK(split_pieces("Sure, it is") == std::vector<std::string>{"Sure", ",", " it", " is"});
  CHECK(split_pieces("  don't!") == std::vector<std::string>{" ", " don't", "!"});
  CHECK(split_pieces("").empty());
}

TEST_CASE("vocabulary ids and specials") {
  const auto v = corpus_vocab();
  CHECK(v.hand() >= static_cast<int>(v.text_size()));
  std::set<int> specials{v.pad(), v.bos(), v.eos(), v.image(), v.hand()};
  CHECK(specials.size() == 5);
  CHECK(v.size() == v.text_size() + 5);
  CHECK(v.token_text(v.hand()) == "<HAND>");
  CHECK(Vocabulary::from_json(v.to_json()) == v);
}

TEST_CASE("encode/decode round-trips arbitrary text") {
  const auto v = corpus_vocab();
  for (const std::string s : {"open the microwave", "Unseen wörds & symbols\t42", "Sure, it is <HAND><HAND>.", ""}) {
    CHECK(v.decode(v.encode(s)) == s);
  }
  const auto ids = v.encode(" open the microwave");
  CHECK(ids.size() == 3);
  const auto marked = v.encode("<HAND>x<HAND>");
  CHECK(std::count(marked.begin(), marked.end(), v.hand()) == 2);
}

TEST_CASE("template bank mirrors the bundled resource") {
  const auto& b = TemplateBank::builtin();
  CHECK(b.questions_action_free().size() == 4);
  CHECK(b.questions_action().size() == 4);
  CHECK(b.answers_action_free().size() == 4);
  CHECK(b.answers_action().size() == 2);
  CHECK(b.implicit_prefixes().size() == 3);
  CHECK(std::find(b.questions_action_free().begin(), b.questions_action_free().end(),
                  "What is the future hand trajectory in this video?") != b.questions_action_free().end());
  CHECK(b.implicit_prefix_of("Where should my hand move to if I want to slice bread?"));
  CHECK_FALSE(b.implicit_prefix_of("Cut the bread"));
  CHECK_THROWS_AS(TemplateBank::parse("[bogus]\nx\n"), ConfigError);
}

TEST_CASE("render_template: action-conditioned VHP") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const auto r = render_template(TaskKind::kVhp, std::string("open the microwave"), 4, rng);
    CHECK(r.question.find("open the microwave") != std::string::npos);
    CHECK(count_markers(r.answer) == 4);
    CHECK(count_markers(r.question) == 0);
  }
}

TEST_CASE("render_template: action-free and single step") {
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Rng rng(seed);
    const auto r = render_template(TaskKind::kVhp, std::nullopt, 1, rng);
    seen.insert(r.question);
    CHECK(count_markers(r.answer) == 1);
    const auto& free = TemplateBank::builtin().questions_action_free();
    CHECK(std::find(free.begin(), free.end(), r.question) != free.end());
    CHECK(r.answer.find("{action}") == std::string::npos);
  }
  CHECK(seen.count("What is the future hand trajectory in this video?") == 1);
  Rng rng(1);
  CHECK_THROWS_AS(render_template(TaskKind::kVhp, std::nullopt, 0, rng), ConfigError);
}

TEST_CASE("render_template: determinism and RBHP answers never restate the instruction") {
  Rng a(5), b(5);
  CHECK(render_template(TaskKind::kVhp, std::string("cut the paper"), 4, a).answer ==
        render_template(TaskKind::kVhp, std::string("cut the paper"), 4, b).answer);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const std::string q = "Where should my hand move to if I want to trim this ribbon?";
    const auto r = render_template(TaskKind::kRbhp, q, 4, rng);
    CHECK(r.question == q);
    CHECK(r.answer.find("ribbon") == std::string::npos);
    Rng rng2(seed);
    const auto r2 = render_template(TaskKind::kRbhp, std::string("trim this ribbon"), 4, rng2);
    CHECK(r2.question.find("trim this ribbon") != std::string::npos);
    CHECK(r2.answer.find("ribbon") == std::string::npos);
  }
}

TEST_CASE("tokenize_sample: slots, masks, round trip") {
  const std::string q = "can you give me the future hand trajectory for open the microwave?";
  const std::string a = "Sure, it is <HAND><HAND><HAND><HAND>.";
  const std::vector<std::string> corpus{q, a};
  const auto v = Vocabulary::build(corpus);
  const auto gt = traj(4);
  const auto seq = tokenize_sample(v, q, a, gt);
  REQUIRE(seq.hand_slots.size() == 4);
  std::size_t k = 0;
  for (const auto& [pos, step] : seq.hand_slots) {
    CHECK(seq.ids[pos] == v.hand());
    CHECK(seq.loss_mask[pos] == LossKind::kHand);
    CHECK(step == gt.step(k++));
  }
  for (std::size_t i = 0; i < seq.prompt_length; ++i) CHECK(seq.loss_mask[i] == LossKind::kIgnore);
  CHECK(seq.ids.front() == v.bos());
  CHECK(seq.ids.back() == v.eos());
  CHECK(seq.loss_mask.back() == LossKind::kText);
  CHECK(std::count(seq.ids.begin(), seq.ids.begin() + seq.prompt_length, v.image()) == 1);
  CHECK(v.decode(seq.prompt()) == "<bos>USER: <image>, " + q + " ASSISTANT:");
  CHECK(v.decode(seq.answer()) == " " + a + "<eos>");

  std::vector<HandStep> steps;
  for (std::size_t t = 0; t < 4; ++t) steps.push_back(gt.step(t));
  const auto parsed = parse_generated(v, seq.answer(), steps);
  CHECK(parsed.trajectory == gt);
  CHECK(parsed.text == " " + a);
  CHECK(parsed.plain_text == " Sure, it is .");
}

TEST_CASE("tokenize_sample: horizon mismatch") {
  const auto v = corpus_vocab();
  CHECK_THROWS_AS(tokenize_sample(v, "q", "Sure, it is <HAND><HAND><HAND><HAND>.", traj(3)), HorizonMismatch);
  CHECK_THROWS_AS(tokenize_sample(v, "q", "Sure, it is <HAND><HAND>.", traj(3)), HorizonMismatch);
  CHECK_THROWS_AS(tokenize_sample(v, "<HAND>", "<HAND>", traj(1)), DataError);
}

TEST_CASE("parse_generated edge cases") {
  const auto v = corpus_vocab();
  const auto text_only = v.encode(" open the microwave");
  const auto p = parse_generated(v, text_only, {});
  CHECK(p.trajectory.horizon() == 0);
  CHECK(p.plain_text == " open the microwave");
  const auto hands = v.encode("<HAND><HAND>");
  CHECK_THROWS_AS(parse_generated(v, hands, std::vector<HandStep>(1)), MalformedGeneration);
}

TEST_CASE("hand features") {
  HandStep h;
  h.right = Point2{0.3, 0.7};
  const auto f = hand_features(h);
  CHECK(f == std::array<double, 6>{0, 0, 0.3, 0.7, 0, 1});
  CHECK(hand_from_features(f) == h);
}

TEST_CASE("encode_hand_step: zero weights give the base embedding") {
  const std::size_t d = 8;
  HandEncoderParams<double> p{d, std::vector<double>(6 * d, 0.0), std::vector<double>(d, 0.0)};
  std::vector<double> base(d);
  for (std::size_t i = 0; i < d; ++i) base[i] = 0.1 * i;
  HandStep h;
  h.left = Point2{0.4, 0.2};
  CHECK(encode_hand_step<double>(h, p, base) == base);
}

TEST_CASE("encode_hand_step: injective on random steps; gradient matches finite differences") {
  const std::size_t d = 16;
  Rng rng(3);
  HandEncoderParams<double> p{d, std::vector<double>(6 * d), std::vector<double>(d)};
  for (auto& w : p.w) w = rng.normal(0, 0.5);
  for (auto& b : p.b) b = rng.normal(0, 0.1);
  std::vector<double> base(d, 0.0);

  std::set<std::array<double, 6>> steps;
  std::set<std::vector<double>> seen;
  while (steps.size() < 1000) {
    HandStep h;
    if (rng.bernoulli(0.8)) h.left = Point2{rng.uniform(), rng.uniform()};
    if (rng.bernoulli(0.8)) h.right = Point2{rng.uniform(), rng.uniform()};
    if (!steps.insert(hand_features(h)).second) continue;
    seen.insert(encode_hand_step<double>(h, p, base));
  }
  CHECK(seen.size() == 1000);

  // d(out_j)/d(f_i) = W[i][j].
  std::array<double, 6> f{0.3, 0.6, 0.2, 0.9, 1, 1};
  const double eps = 1e-6;
  for (std::size_t i = 0; i < 4; ++i) {
    auto fp = f, fm = f;
    fp[i] += eps;
    fm[i] -= eps;
    const auto op = encode_hand_features<double>(fp, p, base);
    const auto om = encode_hand_features<double>(fm, p, base);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double fd = (op[j] - om[j]) / (2 * eps);
      num += (fd - p.w[i * d + j]) * (fd - p.w[i * d + j]);
      den += p.w[i * d + j] * p.w[i * d + j];
    }
    CHECK(std::sqrt(num / den) < 1e-5);
  }
}

TEST_CASE("canonical template bank") {
  const auto bank = TemplateBank::builtin().canonical();
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto r = render_template(TaskKind::kVhp, std::string("cut the paper"), 4, rng, bank);
    CHECK(r.question == "can you give me the future hand trajectory for cut the paper?");
    CHECK(r.answer == "Sure, it is <HAND><HAND><HAND><HAND>.");
    CHECK(r.template_id == "qa0/af0");
  }
  CHECK(bank.implicit_prefixes() == TemplateBank::builtin().implicit_prefixes());
}
