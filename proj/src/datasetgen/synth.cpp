#include "handtraj/datasetgen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "affordances_data.hpp"
#include "handtraj/datasetgen/annotate.hpp"

namespace handtraj::datasetgen {

namespace {

struct Tables {
  std::vector<SceneObject> objects;
  std::vector<Affordance> affordances;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

Tables parse_tables(const std::string& text) {
  Tables t;
  std::istringstream in(text);
  std::string line, section;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      section = line;
      continue;
    }
    const auto f = split(line, '|');
    if (section == "[objects]" && f.size() == 4) {
      const auto c = split(f[2], ',');
      if (c.size() != 3) throw ConfigError("affordance table: bad color '" + f[2] + "'");
      t.objects.push_back({f[0], f[1],
                           Rgb{static_cast<std::uint8_t>(std::stoi(c[0])), static_cast<std::uint8_t>(std::stoi(c[1])),
                               static_cast<std::uint8_t>(std::stoi(c[2]))},
                           f[3]});
    } else if (section == "[affordances]" && f.size() == 2) {
      t.affordances.push_back({f[0], f[1]});
    } else {
      throw ConfigError("affordance table: malformed line '" + line + "'");
    }
  }
  return t;
}

const Tables& tables() {
  static const Tables t = parse_tables(detail::kAffordanceText);
  return t;
}

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

// Fraction of pixel cell [i, i+1) x [j, j+1) (in pixel units) covered by the
// rectangle.
double coverage(double x0, double x1, double y0, double y1, int i, int j) {
  const double ox = std::max(0.0, std::min(x1, i + 1.0) - std::max(x0, static_cast<double>(i)));
  const double oy = std::max(0.0, std::min(y1, j + 1.0) - std::max(y0, static_cast<double>(j)));
  return ox * oy;
}

void draw_square(Image& img, Point2 center, double size, Rgb color) {
  const double S = img.width;
  const double x0 = (center.x - size / 2) * S, x1 = (center.x + size / 2) * S;
  const double y0 = (center.y - size / 2) * img.height, y1 = (center.y + size / 2) * img.height;
  for (int j = std::max(0, static_cast<int>(std::floor(y0))); j < std::min(img.height, static_cast<int>(std::ceil(y1))); ++j) {
    for (int i = std::max(0, static_cast<int>(std::floor(x0))); i < std::min(img.width, static_cast<int>(std::ceil(x1))); ++i) {
      const double a = coverage(x0, x1, y0, y1, i, j);
      if (a <= 0) continue;
      const Rgb p = img.at(i, j);
      auto mix = [a](std::uint8_t bg, std::uint8_t fg) {
        return static_cast<std::uint8_t>(std::lround((1 - a) * bg + a * fg));
      };
      img.set(i, j, {mix(p.r, color.r), mix(p.g, color.g), mix(p.b, color.b)});
    }
  }
}

constexpr Rgb kRightHand{235, 195, 165};
constexpr Rgb kLeftHand{190, 150, 120};

struct Script {
  std::vector<std::size_t> objects;
  std::vector<Point2> positions;
  std::size_t target = 0;
  std::size_t phrase = 0;
  Point2 cam_step;
  Point2 right_start;
  double onset = 0, duration = 1, phase = 0;
  bool left = false;
  Point2 left_start, left_vel;
};

Point2 camera(const Script& s, std::size_t t, std::size_t T) {
  const double k = static_cast<double>(t) - static_cast<double>(T - 1);
  return {k * s.cam_step.x, k * s.cam_step.y};
}

Point2 right_hand(const Script& s, std::size_t t) {
  const Point2 target = s.positions[s.target];
  const double u = std::clamp((static_cast<double>(t) - s.onset) / s.duration, 0.0, 1.0);
  const Point2 d = target - s.right_start;
  const double len = std::hypot(d.x, d.y);
  const Point2 perp = len > 0 ? Point2{-d.y / len, d.x / len} : Point2{0, 0};
  const double e = smoothstep(u);
  const double bulge = 0.04 * std::sin(std::numbers::pi * e);
  const double sway = 0.004 * (1.0 - e);
  const double tt = static_cast<double>(t);
  return s.right_start + e * d + bulge * perp +
         Point2{sway * std::sin(0.9 * tt + s.phase), sway * std::cos(0.7 * tt + s.phase)};
}

Point2 left_hand(const Script& s, std::size_t t) { return s.left_start + static_cast<double>(t) * s.left_vel; }

Script make_script(Rng& rng, const SynthSpec& spec) {
  const auto& objs = tables().objects;
  Script s;
  std::vector<std::size_t> order(objs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  s.objects.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.objects_per_scene));
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    Point2 p;
    for (int attempt = 0;; ++attempt) {
      p = {rng.uniform(0.12, 0.88), rng.uniform(0.12, 0.6)};
      bool ok = true;
      for (const auto& q : s.positions) ok &= distance(p, q) >= 0.2;
      if (ok || attempt > 200) break;
    }
    s.positions.push_back(p);
  }
  s.target = rng.index(s.objects.size());
  s.phrase = rng.index(2);
  const double m = spec.max_camera_step;
  s.cam_step = {rng.uniform(-m, m), rng.uniform(-m, m)};
  s.right_start = {rng.uniform(0.55, 0.85), rng.uniform(0.78, 0.88)};
  const double T = static_cast<double>(spec.context_frames);
  s.onset = rng.uniform(T - 5, T - 2);
  s.duration = rng.uniform(5, 8);
  s.phase = rng.uniform(0, 2 * std::numbers::pi);
  s.left = rng.bernoulli(spec.left_hand_probability);
  s.left_start = {rng.uniform(0.12, 0.35), rng.uniform(0.75, 0.88)};
  s.left_vel = {rng.uniform(-0.003, 0.003), rng.uniform(-0.003, 0.003)};
  return s;
}

Image render(const Script& s, std::size_t t, const SynthSpec& spec) {
  const int S = spec.frame_size;
  const Point2 cam = camera(s, t, spec.context_frames);
  Image img(S, S);
  for (int j = 0; j < S; ++j) {
    for (int i = 0; i < S; ++i) {
      const double wx = (i + 0.5) / S + cam.x, wy = (j + 0.5) / S + cam.y;
      const bool dark = (static_cast<int>(std::floor(wx * 4)) + static_cast<int>(std::floor(wy * 4))) % 2 != 0;
      const std::uint8_t v = dark ? 62 : 78;
      img.set(i, j, {v, static_cast<std::uint8_t>(v - 8), static_cast<std::uint8_t>(v - 16)});
    }
  }
  const auto& objs = tables().objects;
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    draw_square(img, s.positions[k] - cam, spec.object_size, objs[s.objects[k]].color);
  }
  if (s.left) draw_square(img, left_hand(s, t) - cam, spec.hand_size, kLeftHand);
  draw_square(img, right_hand(s, t) - cam, spec.hand_size, kRightHand);
  return img;
}

gt::HandDetection detection(Point2 center, Side side, int frame, Rng& rng, double noise) {
  const Point2 c{center.x + (noise > 0 ? rng.normal(0, noise) : 0.0), center.y + (noise > 0 ? rng.normal(0, noise) : 0.0)};
  gt::HandDetection d;
  d.frame_index = frame;
  d.side = side;
  d.bbox = {std::clamp(c.x - 0.03, 0.0, 1.0), std::clamp(c.y - 0.04, 0.0, 1.0), std::clamp(c.x + 0.03, 0.0, 1.0),
            std::clamp(c.y + 0.04, 0.0, 1.0)};
  d.confidence = 0.95;
  return d;
}

std::string description_for(const SceneObject& o) {
  return "The main item is a " + o.color_name + " " + o.name +
         " lying on a checkered table. The scene is a tabletop seen from above with a few household items.";
}

}  // namespace

const std::vector<SceneObject>& scene_objects() { return tables().objects; }
const std::vector<Affordance>& affordances() { return tables().affordances; }

const SceneObject& resolve_affordance(const std::string& phrase) {
  const SceneObject* found = nullptr;
  std::size_t hits = 0;
  for (const auto& a : affordances()) {
    if (a.phrase != phrase) continue;
    ++hits;
    for (const auto& o : scene_objects())
      if (o.name == a.object) found = &o;
  }
  if (hits != 1 || !found) throw DataError("implicit request '" + phrase + "' does not resolve to one object");
  return *found;
}

std::string implicit_question(const std::string& phrase) {
  return "Where should my hand move to if I want to " + phrase + "?";
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("synth spec: " + m); };
  if (context_frames < 2) fail("context_frames must be at least 2");
  if (horizon < 1) fail("horizon must be positive");
  if (frame_size < 4) fail("frame_size must be at least 4");
  if (width < 16 || height < 16) fail("detection resolution too small");
  if (objects_per_scene < 1 || objects_per_scene > scene_objects().size()) fail("objects_per_scene out of range");
  if (!(object_size > 0 && object_size < 0.5 && hand_size > 0 && hand_size < 0.5)) fail("glyph sizes out of range");
  if (!(max_camera_step >= 0 && max_camera_step < 0.02)) fail("max_camera_step must lie in [0, 0.02)");
  if (!(detection_noise >= 0)) fail("detection_noise must be nonnegative");
  if (!(left_hand_probability >= 0 && left_hand_probability <= 1)) fail("left_hand_probability must lie in [0, 1]");
  if (matches_per_pair < 4) fail("matches_per_pair must be at least 4");
}

Json SynthSpec::to_json() const {
  return {{"context_frames", context_frames},   {"horizon", horizon},
          {"frame_size", frame_size},           {"width", width},
          {"height", height},                   {"objects_per_scene", objects_per_scene},
          {"object_size", object_size},         {"hand_size", hand_size},
          {"max_camera_step", max_camera_step}, {"detection_noise", detection_noise},
          {"left_hand_probability", left_hand_probability}, {"matches_per_pair", matches_per_pair},
          {"canonical_templates", canonical_templates}, {"chat_model", chat_model}};
}

SynthSpec SynthSpec::from_json(const Json& j) {
  SynthSpec s;
  for (const auto& [key, value] : j.items()) {
    if (!s.to_json().contains(key)) throw ConfigError("synth spec: unknown key '" + key + "'");
  }
#define HT_FIELD(name) s.name = j.value(#name, s.name)
  HT_FIELD(context_frames);
  HT_FIELD(horizon);
  HT_FIELD(frame_size);
  HT_FIELD(width);
  HT_FIELD(height);
  HT_FIELD(objects_per_scene);
  HT_FIELD(object_size);
  HT_FIELD(hand_size);
  HT_FIELD(max_camera_step);
  HT_FIELD(detection_noise);
  HT_FIELD(left_hand_probability);
  HT_FIELD(matches_per_pair);
  HT_FIELD(canonical_templates);
  HT_FIELD(chat_model);
#undef HT_FIELD
  s.validate();
  return s;
}

std::vector<gt::ClipRecord> SynthWorld::clip_records() const {
  std::vector<gt::ClipRecord> out;
  for (const auto& c : clips) out.push_back(c.clip);
  return out;
}

std::vector<gt::GtSample> SynthWorld::gt_samples() const {
  std::vector<gt::GtSample> out;
  for (const auto& c : clips) out.push_back(c.gt);
  return out;
}

SynthWorld synth_world(std::uint64_t seed, std::size_t n_clips, const SynthSpec& spec) {
  spec.validate();
  const std::size_t T = spec.context_frames, N = spec.horizon;
  const auto bank = spec.canonical_templates ? tokens::TemplateBank::builtin().canonical() : tokens::TemplateBank::builtin();
  ChatClientConfig chat;
  chat.model = spec.chat_model;
  const auto& objs = scene_objects();

  SynthWorld world;
  Rng root(seed);
  for (std::size_t i = 0; i < n_clips; ++i) {
    Rng rng = root.fork(i);
    const Script s = make_script(rng, spec);
    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "s%llu_%05zu", static_cast<unsigned long long>(seed), i);
    const std::string id = idbuf;
    const SceneObject& target = objs[s.objects[s.target]];
    std::vector<const Affordance*> phrases;
    for (const auto& a : affordances())
      if (a.object == target.name) phrases.push_back(&a);
    const std::string phrase = phrases.at(s.phrase % phrases.size())->phrase;

    SynthClip sc;
    sc.target = target.name;
    sc.affordance_phrase = phrase;
    gt::ClipRecord& clip = sc.clip;
    clip.clip_id = id;
    clip.width = spec.width;
    clip.height = spec.height;
    clip.narration = target.action;
    std::vector<Image> frames;
    const double W = spec.width, H = spec.height;
    for (std::size_t t = 0; t < T + N; ++t) {
      (t < T ? clip.obs_frames : clip.future_frames).push_back(static_cast<int>(t));
      frames.push_back(render(s, t, spec));
      const Point2 cam = camera(s, t, T);
      clip.detections.push_back(detection(right_hand(s, t) - cam, Side::kRight, static_cast<int>(t), rng, spec.detection_noise));
      if (s.left) clip.detections.push_back(detection(left_hand(s, t) - cam, Side::kLeft, static_cast<int>(t), rng, spec.detection_noise));
      if (t + 1 < T + N) {
        const Point2 cb = camera(s, t + 1, T);
        gt::FramePairMatches pm{static_cast<int>(t), static_cast<int>(t + 1), {}};
        while (pm.matches.size() < spec.matches_per_pair) {
          const Point2 qa{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
          const Point2 qb = qa + cam - cb;
          if (qb.x < 0.02 || qb.x > 0.98 || qb.y < 0.02 || qb.y > 0.98) continue;
          pm.matches.push_back({{qa.x * W, qa.y * H}, {qb.x * W, qb.y * H}, 1.0});
        }
        clip.matches.push_back(std::move(pm));
      }
    }
    clip.validate();

    gt::GtSample& g = sc.gt;
    g.clip_id = id;
    g.context_length = T;
    g.narration = target.action;
    g.future = HandTrajectory(N);
    g.context = HandTrajectory(T);
    for (std::size_t t = 0; t < T + N; ++t) {
      HandStep h;
      h.right = right_hand(s, t);
      if (s.left) h.left = left_hand(s, t);
      if (t < T) {
        g.context.set_step(t, h);
      } else {
        g.future.set_step(t - T, h);
      }
    }
    for (std::size_t t = 0; t + 1 < T + N; ++t) {
      const Point2 d = camera(s, t, T) - camera(s, t + 1, T);
      g.provenance.pair_homographies.push_back(geometry::Homography::translation(d.x, d.y));
    }
    g.provenance.criteria_hash = "synthetic";

    Rng qrng = clip_rng(seed, id);
    const auto ex = tokens::render_template(tokens::TaskKind::kVhp, target.action, N, qrng, bank);
    world.explicit_qa.push_back({id, tokens::TaskKind::kVhp, ex.question, ex.answer, g.future, target.action,
                                 ex.template_id, std::nullopt});
    const std::string iq = implicit_question(phrase);
    Rng irng = clip_rng(seed, id);
    const auto im = tokens::render_template(tokens::TaskKind::kRbhp, iq, N, irng, bank);

    const std::string description = description_for(target);
    const ChatRequest dreq = describe_request(frame_reference(id, static_cast<int>(T) - 1), target.action, chat);
    const ChatRequest ireq = implicit_request(description, target.action, chat);
    world.fixtures.push_back({dreq.hash(), dreq.to_json(), description});
    world.fixtures.push_back({ireq.hash(), ireq.to_json(), iq});
    const Json transcript = Json::array({Json{{"request", dreq.to_json()}, {"response", description}},
                                         Json{{"request", ireq.to_json()}, {"response", iq}}});
    world.implicit_qa.push_back({id, tokens::TaskKind::kRbhp, im.question, im.answer, g.future, iq, im.template_id,
                                 transcript_hash(transcript)});

    world.frames.put(id, std::move(frames));
    world.clips.push_back(std::move(sc));
  }
  std::sort(world.fixtures.begin(), world.fixtures.end(),
            [](const ChatFixture& a, const ChatFixture& b) { return a.request_hash < b.request_hash; });
  return world;
}

}  // namespace handtraj::datasetgen
