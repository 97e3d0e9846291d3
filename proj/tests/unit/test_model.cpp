#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "handtraj/model/gradcheck.hpp"
#include "handtraj/model/slowfast.hpp"
#include "handtraj/model/train.hpp"

using namespace handtraj;
using namespace handtraj::model;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.layers = 2;
  c.heads = 2;
  c.vision_dim = 16;
  c.context_frames = 4;
  c.frame_size = 8;
  c.patch_size = 4;  // g = 2, M = 4
  c.slow_frames = 2;
  c.pool_kernel = 1;
  c.horizon = 2;
  c.latent_dim = 4;
  c.cvae_hidden = 16;
  c.max_len = 64;
  c.init_std = 0.2;
  return c;
}

tokens::Vocabulary small_vocab() {
  const std::vector<std::string> corpus{"USER: , open the door ASSISTANT:", " Sure, it is <HAND><HAND>."};
  return tokens::Vocabulary::build(corpus);
}

std::vector<Image> random_frames(const ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> frames;
  for (std::size_t t = 0; t < c.context_frames; ++t) {
    Image img(static_cast<int>(c.frame_size), static_cast<int>(c.frame_size));
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.index(256));
    frames.push_back(img);
  }
  return frames;
}

Example make_example(const ModelConfig& c, const tokens::Vocabulary& v, std::uint64_t seed, bool left_valid = true) {
  HandTrajectory gt(c.horizon);
  Rng rng(seed);
  for (std::size_t t = 0; t < c.horizon; ++t) {
    gt.at(Side::kRight, t) = Point2{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    if (left_valid || t == 0) gt.at(Side::kLeft, t) = Point2{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  }
  Example ex;
  ex.patches = frames_to_patches(random_frames(c, seed + 100), c);
  ex.seq = tokens::tokenize_sample(v, "open the door", "Sure, it is <HAND><HAND>.", gt);
  return ex;
}

template <typename Real>
std::vector<Real> hidden_row(const nn::Tape<Real>& tape, nn::Var v, std::size_t r) {
  const auto& m = tape.value(v);
  return {m.row(r), m.row(r) + m.cols};
}

}  // namespace

TEST_CASE("slow-fast token count") {
  for (std::size_t T : {1, 4, 10}) {
    for (std::size_t g : {2, 4, 6}) {
      for (std::size_t k = 1; k <= g; ++k) {
        if (g % k) continue;
        for (std::size_t s = 1; s <= T; ++s) {
          const auto P = slowfast_operator(T, g, s, k);
          CHECK(P.rows == T + s * (g / k) * (g / k));
          CHECK(pooled_token_count(T, g, s, k) == P.rows);
        }
      }
    }
  }
  ModelConfig def;
  CHECK(def.visual_token_count() == def.context_frames + def.tokens_per_frame());
  CHECK(def.visual_token_count() == 26);
  CHECK_THROWS_AS(slowfast_operator(10, 4, 4, 3), ConfigError);
  CHECK_THROWS_AS(slowfast_operator(4, 4, 5, 2), ConfigError);
}

TEST_CASE("slow-fast pooling matches a direct average") {
  const std::size_t T = 5, g = 4, s = 3, k = 2, d = 3, M = g * g;
  Rng rng(3);
  nn::Matrix<double> v(T * M, d);
  for (auto& x : v.data) x = rng.uniform(-1, 1);
  const auto out = slowfast_pool(v, T, g, s, k);
  REQUIRE(out.rows == T + s * 4);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      double m = 0;
      for (std::size_t i = 0; i < M; ++i) m += v(t * M + i, c);
      CHECK(out(t, c) == doctest::Approx(m / M).epsilon(1e-14));
    }
  }
  const std::vector<std::size_t> frames{0, 2, 4};
  CHECK(slow_frame_indices(T, s) == frames);
  std::size_t row = T;
  for (std::size_t f : frames) {
    for (std::size_t by = 0; by < 2; ++by) {
      for (std::size_t bx = 0; bx < 2; ++bx, ++row) {
        for (std::size_t c = 0; c < d; ++c) {
          const double a = v(f * M + (2 * by) * g + 2 * bx, c), b = v(f * M + (2 * by) * g + 2 * bx + 1, c);
          const double e = v(f * M + (2 * by + 1) * g + 2 * bx, c), h = v(f * M + (2 * by + 1) * g + 2 * bx + 1, c);
          CHECK(out(row, c) == doctest::Approx((a + b + e + h) / 4).epsilon(1e-14));
        }
      }
    }
  }
}

TEST_CASE("slow-fast constant input and single-frame locality") {
  const std::size_t T = 10, g = 4, s = 4, k = 2, M = 16;
  nn::Matrix<double> c(T * M, 5, 0.375);
  for (double x : slowfast_pool(c, T, g, s, k).data) CHECK(x == 0.375);

  for (std::size_t f = 0; f < T; ++f) {
    nn::Matrix<double> v(T * M, 2);
    for (std::size_t m = 0; m < M; ++m) v(f * M + m, 0) = 1.0 + static_cast<double>(m);
    const auto out = slowfast_pool(v, T, g, s, k);
    std::size_t fast_nonzero = 0, slow_blocks = 0;
    for (std::size_t t = 0; t < T; ++t) fast_nonzero += out(t, 0) != 0;
    for (std::size_t b = 0; b < s; ++b) {
      bool any = false;
      for (std::size_t r = 0; r < 4; ++r) any |= out(T + b * 4 + r, 0) != 0;
      slow_blocks += any;
    }
    CHECK(fast_nonzero == 1);
    CHECK(out(f, 0) != 0);
    CHECK(slow_blocks <= 1);
  }
}

TEST_CASE("frame encoding") {
  ModelConfig c;
  c.context_frames = 10;
  c.frame_size = 16;
  c.patch_size = 4;
  HandModel<double> m(c, small_vocab(), 1);
  CHECK(c.tokens_per_frame() == 16);
  std::vector<Image> zeros(10, Image(16, 16));
  m.params().at("patch.b").zero();
  {
    nn::Tape<double> tape(&m.params());
    const auto v = m.encode_frames(tape, frames_to_patches(zeros, c));
    CHECK(tape.rows(v) == 160);
    for (double x : tape.value(v).data) CHECK(x == 0.0);
  }
  auto frames = random_frames(c, 5);
  auto swapped = frames;
  std::swap(swapped[2], swapped[7]);
  nn::Tape<double> tape(&m.params());
  const auto a = tape.value(m.encode_frames(tape, frames_to_patches(frames, c)));
  const auto b = tape.value(m.encode_frames(tape, frames_to_patches(swapped, c)));
  for (std::size_t t = 0; t < 10; ++t) {
    const std::size_t src = t == 2 ? 7 : t == 7 ? 2 : t;
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t col = 0; col < a.cols; ++col) CHECK(b(t * 16 + r, col) == a(src * 16 + r, col));
  }
  std::vector<Image> wrong(10, Image(8, 8));
  CHECK_THROWS_AS(frames_to_patches(wrong, c), ShapeMismatch);
  std::vector<Image> short_clip(3, Image(16, 16));
  CHECK_THROWS_AS(frames_to_patches(short_clip, c), ShapeMismatch);
}

TEST_CASE("visual projector") {
  ModelConfig c = tiny_config();
  c.projector_layers = 1;
  HandModel<double> m(c, small_vocab(), 2);
  auto& w = m.params().at("proj.fc.w");
  w.zero();
  for (std::size_t i = 0; i < w.rows; ++i) w(i, i) = 1.0;
  m.params().at("proj.fc.b").zero();
  Rng rng(1);
  nn::Matrix<double> x(6, c.vision_dim);
  for (auto& v : x.data) v = rng.uniform(-2, 2);
  nn::Tape<double> tape(&m.params());
  CHECK(tape.value(m.project_visual(tape, tape.constant(x))) == x);

  HandModel<double> two(tiny_config(), small_vocab(), 3);
  nn::Matrix<double> xp(6, c.vision_dim);
  for (std::size_t r = 0; r < 6; ++r) std::copy(x.row(5 - r), x.row(5 - r) + x.cols, xp.row(r));
  nn::Tape<double> t2(&two.params());
  const auto y = t2.value(two.project_visual(t2, t2.constant(x)));
  const auto yp = t2.value(two.project_visual(t2, t2.constant(xp)));
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t col = 0; col < y.cols; ++col) CHECK(yp(5 - r, col) == y(r, col));
  CHECK_THROWS_AS(two.project_visual(t2, t2.constant(nn::Matrix<double>(2, c.vision_dim + 1))), ShapeMismatch);

  // Gradient of a fixed linear readout through the projector.
  nn::Grads<double> grads = two.params().zeros_like();
  nn::Matrix<double> r(6, c.d_model);
  for (auto& v : r.data) v = rng.uniform(-1, 1);
  {
    nn::Tape<double> t(&two.params());
    const auto L = t.sum(t.mul(two.project_visual(t, t.constant(x)), t.constant(r)));
    t.backward(L, &grads);
  }
  for (const char* name : {"proj.fc.w", "proj.fc.b", "proj.out.w", "proj.out.b"}) {
    const std::size_t id = two.params().id(name);
    auto& vals = two.params()[id].data;
    double diff = 0, norm = 0;
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double o = vals[k], h = 1e-6;
      vals[k] = o + h;
      nn::Tape<double> tu(&two.params());
      const double up = tu.scalar(tu.sum(tu.mul(two.project_visual(tu, tu.constant(x)), tu.constant(r))));
      vals[k] = o - h;
      nn::Tape<double> td(&two.params());
      const double down = td.scalar(td.sum(td.mul(two.project_visual(td, td.constant(x)), td.constant(r))));
      vals[k] = o;
      const double fd = (up - down) / (2 * h);
      diff += (fd - grads[id].data[k]) * (fd - grads[id].data[k]);
      norm += fd * fd;
    }
    CHECK(std::sqrt(diff / norm) < 1e-5);
  }
}

TEST_CASE("forward is causal and a zero-layer model passes embeddings through") {
  const auto c = tiny_config();
  const auto vocab = small_vocab();
  HandModel<float> m(c, vocab, 4);
  const Example ex = make_example(c, vocab, 1);
  const auto& ids = ex.seq.ids;
  nn::Tape<float> base(&m.params());
  const auto f0 = m.forward(base, &ex.patches, ids, ex.seq.hand_slots);
  const std::size_t L = base.rows(f0.hidden);
  CHECK(L == ids.size() - 1 + c.visual_token_count());

  for (std::size_t j = ex.seq.prompt_length; j < ids.size(); j += 3) {
    auto ids2 = ids;
    auto hands = ex.seq.hand_slots;
    if (ids2[j] == vocab.hand()) {
      hands[j].right = Point2{0.01, 0.99};
    } else {
      ids2[j] = vocab.encode("A").at(0);
    }
    nn::Tape<float> tape(&m.params());
    const auto f1 = m.forward(tape, &ex.patches, ids2, hands);
    const std::size_t q = static_cast<std::size_t>(f1.position[j]);
    for (std::size_t r = 0; r < q; ++r) CHECK(hidden_row(tape, f1.hidden, r) == hidden_row(base, f0.hidden, r));
    CHECK(hidden_row(tape, f1.hidden, q) != hidden_row(base, f0.hidden, q));
  }

  auto c0 = c;
  c0.layers = 0;
  HandModel<float> flat(c0, vocab, 4);
  nn::Tape<float> tape(&flat.params());
  const auto f = flat.forward(tape, &ex.patches, ids, ex.seq.hand_slots);
  CHECK(tape.value(f.residual) == tape.value(f.embeddings));

  auto long_ids = ids;
  long_ids.insert(long_ids.end(), c.max_len, vocab.encode("A").at(0));
  nn::Tape<float> t3(&m.params());
  CHECK_THROWS_AS(m.forward(t3, &ex.patches, long_ids, ex.seq.hand_slots), LengthExceeded);
}

TEST_CASE("CVAE posterior and decoder conventions") {
  const auto c = tiny_config();
  HandModel<double> m(c, small_vocab(), 5);
  for (const char* n : {"cvae.post.fc.w", "cvae.post.fc.b", "cvae.post.out.w", "cvae.post.out.b"}) m.params().at(n).zero();
  Rng rng(2);
  nn::Matrix<double> h(3, c.d_model), g(3, 6);
  for (auto& v : h.data) v = rng.uniform(-3, 3);
  for (auto& v : g.data) v = rng.uniform(0, 1);
  nn::Tape<double> tape(&m.params());
  const auto post = m.cvae_posterior(tape, tape.constant(h), tape.constant(g));
  for (double v : tape.value(post.mu).data) CHECK(v == 0.0);
  for (double v : tape.value(tape.exp(post.logsig)).data) CHECK(v == 1.0);
  CHECK(tape.scalar(tape.kl_standard_normal(post.mu, post.logsig)) == 0.0);

  nn::Matrix<double> z(3, c.latent_dim);
  for (auto& v : z.data) v = rng.normal(0, 10);
  const auto out = tape.value(m.decode_hand(tape, tape.constant(h), tape.constant(z)));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t col = 0; col < 4; ++col) CHECK((out(r, col) >= 0.0 && out(r, col) <= 1.0));
}

TEST_CASE("loss terms") {
  auto c = tiny_config();
  const auto vocab = small_vocab();
  const Example ex = make_example(c, vocab, 3, false);
  {
    HandModel<double> m(c, vocab, 6);
    Rng rng(1);
    LossValues lv;
    nn::Tape<double> tape(&m.params());
    m.loss(tape, ex, rng, &lv);
    CHECK(lv.txt > 0);
    CHECK(lv.recon >= 0);
    CHECK(lv.kl >= 0);
    CHECK(lv.validity >= 0);
    CHECK(lv.total == doctest::Approx(lv.txt + lv.hand));
  }

  // A decoder that outputs the (constant) target with a collapsed posterior.
  c.validity_weight = 0;
  HandModel<double> m(c, vocab, 7);
  HandTrajectory gt(c.horizon);
  for (std::size_t t = 0; t < c.horizon; ++t) {
    gt.at(Side::kLeft, t) = Point2{0.25, 0.5};
    gt.at(Side::kRight, t) = Point2{0.75, 0.125};
  }
  Example fixed = ex;
  fixed.seq = tokens::tokenize_sample(vocab, "open the door", "Sure, it is <HAND><HAND>.", gt);
  for (const char* n : {"cvae.post.out.w", "cvae.post.out.b", "cvae.dec.out.w"}) m.params().at(n).zero();
  auto& b = m.params().at("cvae.dec.out.b");
  const double target[4] = {0.25, 0.5, 0.75, 0.125};
  for (int i = 0; i < 4; ++i) b.data[i] = std::log(target[i] / (1 - target[i]));
  Rng rng(1);
  LossValues lv;
  nn::Tape<double> tape(&m.params());
  m.loss(tape, fixed, rng, &lv);
  CHECK(lv.kl == 0.0);
  CHECK(lv.recon < 1e-28);
  CHECK(lv.hand < 1e-28);
}

TEST_CASE("zero hand weight leaves the trajectory head without gradient") {
  auto c = tiny_config();
  c.lambda_hand = 0;
  const auto vocab = small_vocab();
  HandModel<float> m(c, vocab, 8);
  const Example ex = make_example(c, vocab, 4);
  const Example* batch[] = {&ex};
  nn::Grads<float> grads;
  batch_gradient<float>(m, batch, 9, grads, false);
  std::size_t cvae = 0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!m.is_cvae_param(i)) continue;
    ++cvae;
    for (float g : grads[i].data) CHECK(g == 0.0f);
  }
  CHECK(cvae == 8);
  CHECK_THROWS_AS(batch_gradient<float>(m, std::span<const Example* const>{}, 1, grads, false), EmptyBatch);
}

TEST_CASE("full loss gradients match central differences") {
  const auto c = tiny_config();
  const auto vocab = small_vocab();
  const Example a = make_example(c, vocab, 10), b = make_example(c, vocab, 11, false);
  const Example* batch[] = {&a, &b};

  HandModel<double> m64(c, vocab, 12);
  for (const auto& g : gradient_check<double>(m64, batch, 77, 24, 1e-6, 1)) {
    INFO(g.name);
    CHECK(g.rel_error < 1e-6);
  }
  HandModel<float> m32(c, vocab, 12);
  for (const auto& g : gradient_check<float>(m32, batch, 77, 24, 1e-5, 1)) {
    INFO(g.name);
    CHECK(g.rel_error < 1e-4);
  }
}

TEST_CASE("cached generation agrees with the full forward pass") {
  const auto c = tiny_config();
  const auto vocab = small_vocab();
  HandModel<double> m(c, vocab, 13);
  // Make <HAND> and <eos> likely so generations are structured.
  auto& lb = m.params().at("lm_head.b");
  lb.data[static_cast<std::size_t>(vocab.hand())] = 2.0;
  lb.data[static_cast<std::size_t>(vocab.eos())] = 1.0;
  const Example ex = make_example(c, vocab, 14);
  const auto prompt = ex.seq.prompt();
  SamplingOptions opts;
  opts.max_tokens = 12;
  const auto gens = m.generate(&ex.patches, prompt, opts, 1);
  const auto& gen = gens.at(0);
  REQUIRE(!gen.ids.empty());

  std::vector<int> ids(prompt.begin(), prompt.end());
  std::map<std::size_t, HandStep> hands;
  std::size_t h = 0;
  for (int id : gen.ids) {
    if (id == vocab.hand()) hands[ids.size()] = gen.steps.at(h++);
    ids.push_back(id);
  }
  nn::Tape<double> tape(&m.params());
  const auto f = m.forward(tape, &ex.patches, ids, hands);
  const auto lg = tape.value(m.logits(tape, f.hidden));
  for (std::size_t i = prompt.size(); i < ids.size(); ++i) {
    const std::size_t row = static_cast<std::size_t>(f.position[i] - 1);
    int best = 0;
    for (int v = 0; v < static_cast<int>(lg.cols); ++v) {
      if (v == vocab.pad() || v == vocab.bos() || v == vocab.image()) continue;
      if (lg(row, static_cast<std::size_t>(v)) > lg(row, static_cast<std::size_t>(best))) best = v;
    }
    CHECK(best == ids[i]);
  }
  Example replay{ex.patches, {}};
  replay.seq.ids = ids;
  replay.seq.hand_slots = hands;
  const auto tf = m.teacher_forced_steps(replay);
  REQUIRE(tf.size() == gen.steps.size());
  for (std::size_t i = 0; i < tf.size(); ++i) {
    for (Side s : kSides) {
      REQUIRE(tf[i][s].has_value() == gen.steps[i][s].has_value());
      if (tf[i][s]) CHECK(distance(*tf[i][s], *gen.steps[i][s]) < 1e-9);
    }
  }

  const auto again = m.generate(&ex.patches, prompt, opts, 1);
  CHECK(again.at(0).ids == gen.ids);
  CHECK(again.at(0).steps == gen.steps);

  SamplingOptions tiny = opts;
  tiny.max_tokens = 1;
  lb.data[static_cast<std::size_t>(vocab.eos())] = -50.0;
  CHECK(m.generate(&ex.patches, prompt, tiny, 1).at(0).overrun);

  SamplingOptions st = opts;
  st.temperature = 1.0;
  st.deterministic_hand = false;
  st.seed = 4;
  const auto s1 = m.generate(&ex.patches, prompt, st, 3);
  const auto s2 = m.generate(&ex.patches, prompt, st, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s1[i].ids == s2[i].ids);
    CHECK(s1[i].steps == s2[i].steps);
  }
}

TEST_CASE("training: zero learning rate, descent, determinism, checkpoints") {
  const auto c = tiny_config();
  const auto vocab = small_vocab();
  std::vector<Example> data;
  for (std::uint64_t i = 0; i < 6; ++i) data.push_back(make_example(c, vocab, 20 + i, i % 2 == 0));

  TrainConfig tc;
  tc.steps = 5;
  tc.batch_size = 3;
  tc.lr = 0;
  HandModel<float> frozen(c, vocab, 1);
  const auto before = frozen.params();
  TrainState st;
  train(frozen, data, tc, st);
  CHECK(st.step == 5);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(frozen.params()[i] == before[i]);

  tc.lr = 3e-3;
  tc.steps = 50;
  tc.warmup = 5;
  tc.batch_size = data.size();
  HandModel<float> m(c, vocab, 1);
  std::vector<double> losses;
  TrainState s1;
  train(m, data, tc, s1, [&](const StepLog& l) {
    losses.push_back(l.loss.total);
    return true;
  });
  REQUIRE(losses.size() == 50);
  CHECK(losses.back() < 0.7 * losses.front());

  tc.parallel = false;
  HandModel<float> m2(c, vocab, 1);
  TrainState s2;
  train(m2, data, tc, s2);
  for (std::size_t i = 0; i < m.params().size(); ++i) CHECK(m.params()[i] == m2.params()[i]);

  const auto dir = std::filesystem::temp_directory_path() / "handtraj_test_model";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.ckpt", m, tc, s1, {{"note", "x"}});
  const auto ck = load_checkpoint(dir / "a.ckpt");
  CHECK(ck.state.step == 50);
  CHECK(ck.extra.at("note") == "x");
  CHECK(ck.vocab == vocab);
  const auto restored = model_from_checkpoint(ck);
  for (std::size_t i = 0; i < m.params().size(); ++i) CHECK(restored.params()[i] == m.params()[i]);
  for (std::size_t i = 0; i < ck.state.adam.m.size(); ++i) CHECK(ck.state.adam.v[i] == s1.adam.v[i]);
  SamplingOptions opts;
  CHECK(restored.generate(&data[0].patches, data[0].seq.prompt(), opts).at(0).ids ==
        m.generate(&data[0].patches, data[0].seq.prompt(), opts).at(0).ids);

  // Resuming reproduces an uninterrupted run.
  tc.steps = 60;
  HandModel<float> resumed = model_from_checkpoint(ck);
  TrainState rs = ck.state;
  train(resumed, data, tc, rs);
  train(m, data, tc, s1);
  for (std::size_t i = 0; i < m.params().size(); ++i) CHECK(resumed.params()[i] == m.params()[i]);

  write_text(dir / "bad.ckpt", "not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), SchemaMismatch);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(train(m, std::span<const Example>{}, tc, s1), EmptyBatch);
}
