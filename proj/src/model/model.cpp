#include "handtraj/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "handtraj/kernels/gemm.hpp"
#include "handtraj/model/slowfast.hpp"
#include "handtraj/tokens/hand_embedding.hpp"

namespace handtraj::model {

using kernels::Backend;

nn::Matrix<float> frames_to_patches(std::span<const Image> frames, const ModelConfig& cfg) {
  if (frames.size() != cfg.context_frames) {
    throw ShapeMismatch("expected " + std::to_string(cfg.context_frames) + " frames, got " +
                        std::to_string(frames.size()));
  }
  const std::size_t S = cfg.frame_size, p = cfg.patch_size, g = cfg.grid(), M = cfg.tokens_per_frame();
  nn::Matrix<float> out(frames.size() * M, cfg.patch_dim());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Image& img = frames[t];
    if (static_cast<std::size_t>(img.width) != S || static_cast<std::size_t>(img.height) != S) {
      throw ShapeMismatch("frame " + std::to_string(t) + " is " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + ", expected " + std::to_string(S) + "x" + std::to_string(S));
    }
    for (std::size_t gy = 0; gy < g; ++gy) {
      for (std::size_t gx = 0; gx < g; ++gx) {
        float* row = out.row(t * M + gy * g + gx);
        std::size_t c = 0;
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            const std::size_t i = ((gy * p + y) * S + gx * p + x) * 3;
            for (std::size_t ch = 0; ch < 3; ++ch) row[c++] = static_cast<float>(img.data[i + ch]) / 255.0f;
          }
        }
      }
    }
  }
  return out;
}

namespace {

template <typename Real>
nn::Matrix<Real> to_real(const nn::Matrix<float>& m) {
  if constexpr (std::is_same_v<Real, float>) {
    return m;
  } else {
    return m.template cast<Real>();
  }
}

template <typename Real>
Real gelu_value(Real x) {
  const Real k = static_cast<Real>(0.7978845608028654);
  const Real c3 = static_cast<Real>(0.044715);
  return Real(0.5) * x * (Real(1) + std::tanh(k * (x + c3 * x * x * x)));
}

template <typename Real>
void layer_norm_row(const Real* x, std::size_t n, const nn::Matrix<Real>& g, const nn::Matrix<Real>& b, Real* y) {
  Real mean = 0;
  for (std::size_t c = 0; c < n; ++c) mean += x[c];
  mean /= static_cast<Real>(n);
  Real var = 0;
  for (std::size_t c = 0; c < n; ++c) var += (x[c] - mean) * (x[c] - mean);
  var /= static_cast<Real>(n);
  const Real rs = Real(1) / std::sqrt(var + Real(1e-5));
  for (std::size_t c = 0; c < n; ++c) y[c] = (x[c] - mean) * rs * g.data[c] + b.data[c];
}

template <typename Real>
std::vector<Real> linear_row(std::span<const Real> x, const nn::Matrix<Real>& w, const nn::Matrix<Real>& b) {
  std::vector<Real> y(b.data.begin(), b.data.end());
  kernels::gemm_nn<Real>(1, w.cols, w.rows, x, w.span(), y, Backend::kSerial);
  return y;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

template <typename Real>
HandModel<Real>::HandModel(ModelConfig cfg, tokens::Vocabulary vocab, std::uint64_t seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  cfg_.validate();
  register_params();
  initialize(seed);
}

template <typename Real>
HandModel<Real>::HandModel(ModelConfig cfg, tokens::Vocabulary vocab, nn::ParamStore<Real> params)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  cfg_.validate();
  register_params();
  if (params.size() != params_.size()) throw ShapeMismatch("parameter count does not match the configuration");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = params.at(params_.name(i));
    if (!src.same_shape(params_[i])) {
      throw ShapeMismatch("parameter " + params_.name(i) + " is " + nn::shape_str(src.rows, src.cols) + ", expected " +
                          nn::shape_str(params_[i].rows, params_[i].cols));
    }
    params_[i] = src;
  }
}

template <typename Real>
void HandModel<Real>::register_params() {
  const std::size_t d = cfg_.d_model, dv = cfg_.vision_dim, M = cfg_.tokens_per_frame(), V = vocab_.size();
  const std::size_t hc = cfg_.cvae_hidden, z = cfg_.latent_dim;
  params_.add("patch.w", M * cfg_.patch_dim(), dv);
  params_.add("patch.b", M, dv);
  if (cfg_.projector_layers == 2) {
    params_.add("proj.fc.w", dv, d);
    params_.add("proj.fc.b", 1, d);
    params_.add("proj.out.w", d, d);
    params_.add("proj.out.b", 1, d);
  } else {
    params_.add("proj.fc.w", dv, d);
    params_.add("proj.fc.b", 1, d);
  }
  params_.add("vis_pos", cfg_.visual_token_count(), d);
  params_.add("tok_emb", V, d);
  params_.add("pos_emb", cfg_.max_len, d);
  params_.add("hand.w", 6, d);
  params_.add("hand.b", 1, d);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    params_.add(p + "ln1.g", 1, d);
    params_.add(p + "ln1.b", 1, d);
    params_.add(p + "attn.qkv.w", d, 3 * d);
    params_.add(p + "attn.qkv.b", 1, 3 * d);
    params_.add(p + "attn.out.w", d, d);
    params_.add(p + "attn.out.b", 1, d);
    params_.add(p + "ln2.g", 1, d);
    params_.add(p + "ln2.b", 1, d);
    params_.add(p + "mlp.fc.w", d, 4 * d);
    params_.add(p + "mlp.fc.b", 1, 4 * d);
    params_.add(p + "mlp.proj.w", 4 * d, d);
    params_.add(p + "mlp.proj.b", 1, d);
  }
  params_.add("ln_f.g", 1, d);
  params_.add("ln_f.b", 1, d);
  params_.add("lm_head.w", d, V);
  params_.add("lm_head.b", 1, V);
  params_.add("cvae.post.fc.w", d + 6, hc);
  params_.add("cvae.post.fc.b", 1, hc);
  params_.add("cvae.post.out.w", hc, 2 * z);
  params_.add("cvae.post.out.b", 1, 2 * z);
  params_.add("cvae.dec.fc.w", d + z, hc);
  params_.add("cvae.dec.fc.b", 1, hc);
  params_.add("cvae.dec.out.w", hc, 6);
  params_.add("cvae.dec.out.b", 1, 6);
}

template <typename Real>
void HandModel<Real>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const double base = cfg_.init_std;
  const double resid = base / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(cfg_.layers, 1)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string& name = params_.name(i);
    auto& m = params_[i];
    auto ends = [&](std::string_view s) { return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0; };
    if (ends(".g")) {
      std::fill(m.data.begin(), m.data.end(), Real(1));
      continue;
    }
    if (ends(".b") && name != "patch.b") continue;
    double std = base;
    if (name == "patch.w") {
      std = 1.0 / std::sqrt(static_cast<double>(cfg_.patch_dim()));
    } else if (name == "patch.b") {
      std = base;
    } else if (name.rfind("proj.", 0) == 0 || name.rfind("cvae.", 0) == 0 || name == "hand.w") {
      std = 1.0 / std::sqrt(static_cast<double>(m.rows));
    } else if (ends("attn.out.w") || ends("mlp.proj.w")) {
      std = resid;
    }
    for (auto& v : m.data) v = static_cast<Real>(rng.normal(0.0, std));
  }
}

template <typename Real>
bool HandModel<Real>::is_cvae_param(std::size_t index) const {
  return params_.name(index).rfind("cvae.", 0) == 0;
}

template <typename Real>
nn::Var HandModel<Real>::encode_frames(Tape& tape, const nn::Matrix<float>& patches) const {
  const std::size_t M = cfg_.tokens_per_frame();
  if (patches.rows != cfg_.context_frames * M || patches.cols != cfg_.patch_dim()) {
    throw ShapeMismatch("encode_frames: patches " + nn::shape_str(patches.rows, patches.cols) + ", expected " +
                        nn::shape_str(cfg_.context_frames * M, cfg_.patch_dim()));
  }
  return tape.patch_embed(to_real<Real>(patches), M, param(tape, "patch.w"), param(tape, "patch.b"));
}

template <typename Real>
nn::Var HandModel<Real>::project_visual(Tape& tape, Var tokens) const {
  if (tape.cols(tokens) != cfg_.vision_dim) {
    throw ShapeMismatch("project_visual: input width " + std::to_string(tape.cols(tokens)) + ", expected " +
                        std::to_string(cfg_.vision_dim));
  }
  Var h = tape.linear(tokens, param(tape, "proj.fc.w"), param(tape, "proj.fc.b"));
  if (cfg_.projector_layers == 2) h = tape.linear(tape.gelu(h), param(tape, "proj.out.w"), param(tape, "proj.out.b"));
  return h;
}

template <typename Real>
nn::Var HandModel<Real>::visual_tokens(Tape& tape, const nn::Matrix<float>& patches) const {
  Var enc = encode_frames(tape, patches);
  const auto P = slowfast_operator(cfg_.context_frames, cfg_.grid(), cfg_.slow_frames, cfg_.pool_kernel);
  Var pooled = tape.left_matmul_const(P.template cast<Real>(), enc);
  return tape.add(project_visual(tape, pooled), param(tape, "vis_pos"));
}

template <typename Real>
typename HandModel<Real>::Forward HandModel<Real>::forward(Tape& tape, const nn::Matrix<float>* patches,
                                                             std::span<const int> ids,
                                                             const std::map<std::size_t, HandStep>& hands) const {
  const bool visual = patches != nullptr && patches->rows > 0;
  const std::size_t nv = visual ? cfg_.visual_token_count() : 0;
  std::vector<int> text_ids;
  std::vector<int> hand_rows;
  Mat hand_feat;
  std::vector<Real> feat_data;
  std::size_t image_at = ids.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!vocab_.valid(ids[i])) throw DataError("token id " + std::to_string(ids[i]) + " outside the vocabulary");
    if (visual && ids[i] == vocab_.image() && image_at == ids.size()) {
      image_at = i;
      continue;
    }
    if (ids[i] == vocab_.hand()) {
      auto it = hands.find(i);
      if (it == hands.end()) throw DataError("no hand value for <HAND> at index " + std::to_string(i));
      hand_rows.push_back(static_cast<int>(text_ids.size()));
      for (double f : tokens::hand_features(it->second)) feat_data.push_back(static_cast<Real>(f));
    }
    text_ids.push_back(ids[i]);
  }
  const std::size_t L = text_ids.size() + (image_at < ids.size() ? nv : 0);
  if (L > cfg_.max_len) {
    throw LengthExceeded("sequence of " + std::to_string(L) + " positions exceeds max_len " +
                         std::to_string(cfg_.max_len));
  }

  Forward out;
  Var E = tape.gather_rows(param(tape, "tok_emb"), text_ids);
  if (!hand_rows.empty()) {
    Mat F(hand_rows.size(), 6);
    F.data = std::move(feat_data);
    Var H = tape.linear(tape.constant(std::move(F)), param(tape, "hand.w"), param(tape, "hand.b"));
    E = tape.scatter_add_rows(E, H, hand_rows);
  }
  out.position.assign(ids.size(), -1);
  if (image_at < ids.size()) {
    Var vis = visual_tokens(tape, *patches);
    const std::size_t nt = text_ids.size();
    std::vector<int> order;
    order.reserve(L);
    std::size_t t = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i == image_at) {
        for (std::size_t v = 0; v < nv; ++v) order.push_back(static_cast<int>(nt + v));
        continue;
      }
      out.position[i] = static_cast<int>(order.size());
      order.push_back(static_cast<int>(t++));
    }
    const std::vector<Var> parts{E, vis};
    E = tape.gather_rows(tape.concat_rows(parts), order);
  } else {
    std::iota(out.position.begin(), out.position.end(), 0);
  }
  std::vector<int> pos(L);
  std::iota(pos.begin(), pos.end(), 0);
  Var x = tape.add(E, tape.gather_rows(param(tape, "pos_emb"), pos));
  out.embeddings = x;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    Var qkv;
    x = block(tape, x, l, &qkv);
    out.qkv.push_back(qkv);
  }
  out.residual = x;
  out.hidden = tape.layer_norm(x, param(tape, "ln_f.g"), param(tape, "ln_f.b"));
  return out;
}

template <typename Real>
nn::Var HandModel<Real>::block(Tape& tape, Var x, std::size_t layer, Var* qkv_out) const {
  const std::string p = "layer" + std::to_string(layer) + ".";
  Var h = tape.layer_norm(x, param(tape, p + "ln1.g"), param(tape, p + "ln1.b"));
  Var qkv = tape.linear(h, param(tape, p + "attn.qkv.w"), param(tape, p + "attn.qkv.b"));
  *qkv_out = qkv;
  Var a = tape.causal_attention(qkv, cfg_.heads);
  x = tape.add(x, tape.linear(a, param(tape, p + "attn.out.w"), param(tape, p + "attn.out.b")));
  h = tape.layer_norm(x, param(tape, p + "ln2.g"), param(tape, p + "ln2.b"));
  h = tape.gelu(tape.linear(h, param(tape, p + "mlp.fc.w"), param(tape, p + "mlp.fc.b")));
  return tape.add(x, tape.linear(h, param(tape, p + "mlp.proj.w"), param(tape, p + "mlp.proj.b")));
}

template <typename Real>
nn::Var HandModel<Real>::logits(Tape& tape, Var hidden_rows) const {
  return tape.linear(hidden_rows, param(tape, "lm_head.w"), param(tape, "lm_head.b"));
}

template <typename Real>
typename HandModel<Real>::Posterior HandModel<Real>::cvae_posterior(Tape& tape, Var h, Var gt_features) const {
  Var in = tape.concat_cols(h, gt_features);
  Var hid = tape.gelu(tape.linear(in, param(tape, "cvae.post.fc.w"), param(tape, "cvae.post.fc.b")));
  Var o = tape.linear(hid, param(tape, "cvae.post.out.w"), param(tape, "cvae.post.out.b"));
  const std::size_t z = cfg_.latent_dim;
  return {tape.slice_cols(o, 0, z), tape.slice_cols(o, z, 2 * z)};
}

template <typename Real>
nn::Var HandModel<Real>::decode_hand(Tape& tape, Var h, Var z) const {
  Var in = tape.concat_cols(h, z);
  Var hid = tape.gelu(tape.linear(in, param(tape, "cvae.dec.fc.w"), param(tape, "cvae.dec.fc.b")));
  Var o = tape.linear(hid, param(tape, "cvae.dec.out.w"), param(tape, "cvae.dec.out.b"));
  return tape.concat_cols(tape.sigmoid(tape.slice_cols(o, 0, 4)), tape.slice_cols(o, 4, 6));
}

template <typename Real>
nn::Var HandModel<Real>::loss(Tape& tape, const Example& ex, Rng& rng, LossValues* values) const {
  const auto& seq = ex.seq;
  if (seq.loss_mask.size() != seq.ids.size()) throw ShapeMismatch("loss mask length differs from the ids");
  const Forward f = forward(tape, ex.patches.rows ? &ex.patches : nullptr, seq.ids, seq.hand_slots);

  std::vector<int> pred_rows, targets;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.loss_mask[i] == tokens::LossKind::kIgnore) continue;
    if (f.position[i] < 1) throw DataError("loss position without a preceding token");
    pred_rows.push_back(f.position[i] - 1);
    targets.push_back(seq.ids[i]);
  }
  LossValues lv;
  std::vector<Var> terms;
  if (cfg_.lambda_txt > 0 && !targets.empty()) {
    Var lg = logits(tape, tape.gather_rows(f.hidden, pred_rows));
    Var ce = tape.scale(tape.cross_entropy(lg, targets), Real(1) / static_cast<Real>(targets.size()));
    lv.txt = static_cast<double>(tape.scalar(ce));
    terms.push_back(tape.scale(ce, static_cast<Real>(cfg_.lambda_txt)));
  }

  if (cfg_.lambda_hand > 0 && !seq.hand_slots.empty()) {
    const std::size_t n = seq.hand_slots.size(), z = cfg_.latent_dim;
    std::vector<int> rows;
    Mat F(n, 6), coord_target(n, 4), coord_mask(n, 4), valid_target(n, 2), valid_mask(n, 2, Real(0.5));
    std::size_t r = 0;
    for (const auto& [idx, step] : seq.hand_slots) {
      rows.push_back(f.position[idx] - 1);
      const auto feat = tokens::hand_features(step);
      for (std::size_t c = 0; c < 6; ++c) F(r, c) = static_cast<Real>(feat[c]);
      const double nvalid = 2.0 * (feat[4] + feat[5]);
      for (std::size_t c = 0; c < 4; ++c) {
        coord_target(r, c) = static_cast<Real>(feat[c]);
        const double v = c < 2 ? feat[4] : feat[5];
        coord_mask(r, c) = v > 0 ? static_cast<Real>(1.0 / nvalid) : Real(0);
      }
      valid_target(r, 0) = static_cast<Real>(feat[4]);
      valid_target(r, 1) = static_cast<Real>(feat[5]);
      ++r;
    }
    Var H = tape.gather_rows(f.hidden, rows);
    const Posterior post = cvae_posterior(tape, H, tape.constant(F));
    Mat eps(n, z);
    for (auto& e : eps.data) e = static_cast<Real>(rng.normal());
    Var zs = tape.add(post.mu, tape.mul(tape.exp(post.logsig), tape.constant(std::move(eps))));
    Var out = decode_hand(tape, H, zs);
    Var recon = tape.masked_sq_error(tape.slice_cols(out, 0, 4), coord_target, coord_mask);
    Var kl = tape.kl_standard_normal(post.mu, post.logsig);
    Var bce = tape.bce_with_logits(tape.slice_cols(out, 4, 6), valid_target, valid_mask);
    lv.recon = static_cast<double>(tape.scalar(recon));
    lv.kl = static_cast<double>(tape.scalar(kl));
    lv.validity = static_cast<double>(tape.scalar(bce));
    Var hand = tape.add(recon, tape.add(tape.scale(kl, static_cast<Real>(cfg_.kl_weight)),
                                        tape.scale(bce, static_cast<Real>(cfg_.validity_weight))));
    lv.hand = static_cast<double>(tape.scalar(hand));
    terms.push_back(tape.scale(hand, static_cast<Real>(cfg_.lambda_hand)));
  }
  Var total = terms.empty() ? tape.constant(Mat(1, 1)) : terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);
  lv.total = static_cast<double>(tape.scalar(total));
  if (values) *values = lv;
  return total;
}

template <typename Real>
std::vector<HandStep> HandModel<Real>::teacher_forced_steps(const Example& ex) const {
  Tape tape(&params_);
  const Forward f = forward(tape, ex.patches.rows ? &ex.patches : nullptr, ex.seq.ids, ex.seq.hand_slots);
  std::vector<HandStep> steps;
  for (const auto& [idx, step] : ex.seq.hand_slots) {
    const Real* h = tape.value(f.hidden).row(static_cast<std::size_t>(f.position[idx] - 1));
    steps.push_back(decode_step(std::span<const Real>(h, cfg_.d_model), nullptr));
  }
  return steps;
}

template <typename Real>
struct HandModel<Real>::Cache {
  std::vector<std::vector<Real>> k, v;  // per layer, rows of d
  std::size_t len = 0;
  std::vector<Real> hidden;
};

template <typename Real>
void HandModel<Real>::step(Cache& cache, std::vector<Real> x) const {
  const std::size_t d = cfg_.d_model, H = cfg_.heads, dh = d / H;
  const Real inv = Real(1) / std::sqrt(static_cast<Real>(dh));
  std::vector<Real> h(d);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    layer_norm_row(x.data(), d, params_.at(p + "ln1.g"), params_.at(p + "ln1.b"), h.data());
    const auto qkv = linear_row<Real>(h, params_.at(p + "attn.qkv.w"), params_.at(p + "attn.qkv.b"));
    auto& K = cache.k[l];
    auto& Vc = cache.v[l];
    K.insert(K.end(), qkv.begin() + d, qkv.begin() + 2 * d);
    Vc.insert(Vc.end(), qkv.begin() + 2 * d, qkv.end());
    const std::size_t n = cache.len + 1;
    std::vector<Real> o(d, Real(0)), pr(n);
    for (std::size_t hd = 0; hd < H; ++hd) {
      const Real* q = qkv.data() + hd * dh;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        pr[j] = kernels::dot(q, K.data() + j * d + hd * dh, dh) * inv;
        mx = std::max(mx, pr[j]);
      }
      Real zsum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        pr[j] = std::exp(pr[j] - mx);
        zsum += pr[j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        const Real pj = pr[j] / zsum;
        const Real* vr = Vc.data() + j * d + hd * dh;
        for (std::size_t c = 0; c < dh; ++c) o[hd * dh + c] += pj * vr[c];
      }
    }
    const auto a = linear_row<Real>(o, params_.at(p + "attn.out.w"), params_.at(p + "attn.out.b"));
    for (std::size_t c = 0; c < d; ++c) x[c] += a[c];
    layer_norm_row(x.data(), d, params_.at(p + "ln2.g"), params_.at(p + "ln2.b"), h.data());
    auto m = linear_row<Real>(h, params_.at(p + "mlp.fc.w"), params_.at(p + "mlp.fc.b"));
    for (auto& v : m) v = gelu_value(v);
    const auto y = linear_row<Real>(m, params_.at(p + "mlp.proj.w"), params_.at(p + "mlp.proj.b"));
    for (std::size_t c = 0; c < d; ++c) x[c] += y[c];
  }
  cache.hidden.resize(d);
  layer_norm_row(x.data(), d, params_.at("ln_f.g"), params_.at("ln_f.b"), cache.hidden.data());
  ++cache.len;
}

template <typename Real>
HandStep HandModel<Real>::decode_step(std::span<const Real> hidden, Rng* rng) const {
  const std::size_t d = cfg_.d_model, z = cfg_.latent_dim;
  std::vector<Real> in(hidden.begin(), hidden.end());
  in.resize(d + z, Real(0));
  if (rng) {
    for (std::size_t i = 0; i < z; ++i) in[d + i] = static_cast<Real>(rng->normal());
  }
  auto hid = linear_row<Real>(in, params_.at("cvae.dec.fc.w"), params_.at("cvae.dec.fc.b"));
  for (auto& v : hid) v = gelu_value(v);
  const auto o = linear_row<Real>(hid, params_.at("cvae.dec.out.w"), params_.at("cvae.dec.out.b"));
  std::array<double, 6> f{};
  for (std::size_t c = 0; c < 4; ++c) f[c] = sigmoid(static_cast<double>(o[c]));
  f[4] = static_cast<double>(o[4]);
  f[5] = static_cast<double>(o[5]);
  return tokens::hand_from_features(f);
}

template <typename Real>
std::vector<Generation> HandModel<Real>::generate(const nn::Matrix<float>* patches, std::span<const int> prompt_ids,
                                                  const SamplingOptions& opts, std::size_t count) const {
  if (prompt_ids.empty()) throw DataError("generate: empty prompt");
  if (opts.temperature < 0) throw ConfigError("generate: negative temperature");
  const std::size_t d = cfg_.d_model, V = vocab_.size();

  Cache base;
  {
    Tape tape(&params_);
    const Forward f = forward(tape, patches, prompt_ids, {});
    const Mat& hid = tape.value(f.hidden);
    base.len = hid.rows;
    base.hidden.assign(hid.row(hid.rows - 1), hid.row(hid.rows - 1) + d);
    for (const Var q : f.qkv) {
      const Mat& m = tape.value(q);
      std::vector<Real> k, v;
      k.reserve(cfg_.max_len * d);
      v.reserve(cfg_.max_len * d);
      for (std::size_t r = 0; r < m.rows; ++r) {
        k.insert(k.end(), m.row(r) + d, m.row(r) + 2 * d);
        v.insert(v.end(), m.row(r) + 2 * d, m.row(r) + 3 * d);
      }
      base.k.push_back(std::move(k));
      base.v.push_back(std::move(v));
    }
  }

  const auto& tok = params_.at("tok_emb");
  const auto& pos = params_.at("pos_emb");
  tokens::HandEncoderParams<Real> enc{d, params_.at("hand.w").data, params_.at("hand.b").data};
  const auto& lw = params_.at("lm_head.w");
  const auto& lb = params_.at("lm_head.b");

  Rng root(opts.seed);
  std::vector<Generation> out;
  for (std::size_t gi = 0; gi < count; ++gi) {
    Rng rng = root.fork(gi);
    Cache cache = base;
    Generation gen;
    while (true) {
      if (gen.ids.size() >= opts.max_tokens || cache.len >= cfg_.max_len) {
        gen.overrun = true;
        break;
      }
      auto lg = linear_row<Real>(cache.hidden, lw, lb);
      for (int s : {vocab_.pad(), vocab_.bos(), vocab_.image()}) lg[s] = -std::numeric_limits<Real>::infinity();
      int next = 0;
      if (opts.temperature == 0) {
        next = static_cast<int>(std::max_element(lg.begin(), lg.end()) - lg.begin());
      } else {
        const double mx = static_cast<double>(*std::max_element(lg.begin(), lg.end()));
        std::vector<double> p(V);
        double zsum = 0;
        for (std::size_t i = 0; i < V; ++i) zsum += p[i] = std::exp((static_cast<double>(lg[i]) - mx) / opts.temperature);
        double u = rng.uniform() * zsum;
        next = static_cast<int>(V - 1);
        for (std::size_t i = 0; i < V; ++i) {
          if (p[i] > 0 && u < p[i]) {
            next = static_cast<int>(i);
            break;
          }
          u -= p[i];
        }
        while (p[static_cast<std::size_t>(next)] == 0) --next;
      }
      gen.ids.push_back(next);
      if (next == vocab_.eos()) break;
      std::vector<Real> x;
      const std::span<const Real> base_row(tok.row(static_cast<std::size_t>(next)), d);
      if (next == vocab_.hand()) {
        const HandStep h = decode_step(cache.hidden, opts.deterministic_hand ? nullptr : &rng);
        gen.steps.push_back(h);
        x = tokens::encode_hand_step<Real>(h, enc, base_row);
      } else {
        x.assign(base_row.begin(), base_row.end());
      }
      const Real* pr = pos.row(cache.len);
      for (std::size_t c = 0; c < d; ++c) x[c] += pr[c];
      step(cache, std::move(x));
    }
    out.push_back(std::move(gen));
  }
  return out;
}

template class HandModel<float>;
template class HandModel<double>;

}  // namespace handtraj::model
