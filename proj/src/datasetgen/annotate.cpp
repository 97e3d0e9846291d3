#include "handtraj/datasetgen/annotate.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <set>
#include <thread>

#include "handtraj/common/hash.hpp"

namespace handtraj::datasetgen {

const char* const kDescribeSystemPrompt =
    "You are a system generating descriptions for ego-centric human images. Human is doing household activities.\n\n"
    "Provided with an image and a action narration of what is happening next, such as \"use the scissor\", you will "
    "describe the main item that you see in the image, giving details but staying concise.\n\n"
    "You can describe unambiguously what the item is, its color or relative position if clearly identifiable.\n"
    "You should also give out a overall description of the scene, the environment where the action is taking place.";

const char* const kImplicitSystemPrompt =
    "You are tasked with creating specific, indirect questions and instructions that human could use to identify and "
    "interact with objects based on their names or detailed descriptions provided by users.\n\n"
    "You will be given an action phrase which the human is going to do next, such as \"use the scissor\".\n\n"
    "Based on the descriptions, you must formulate responses that precisely hint at the action phrase without naming "
    "it directly. The aim is to enable the agent to deduce the correct action through these indirect cues, enhancing "
    "its ability to understand and execute tasks involving the object.\n\n"
    "Please format your generated response as a hand trajectory question, some templates are provided below for "
    "reference:\n"
    "\"Where should my hand move to if I want to {implicit description}\"\n"
    "\"Can you provide the hand trajectory for {implicit description}?\"\n"
    "\"What is the recommended hand movement for {implicit description}?\"";

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : lower(s)) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += c;
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string trim_response(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(s.front())) s.erase(s.begin());
  while (!s.empty() && ws(s.back())) s.pop_back();
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

bool is_url(const std::string& s) {
  return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0 || s.rfind("data:", 0) == 0;
}

}  // namespace

std::string transcript_hash(const Json& transcript) { return short_hash(transcript.dump()); }

std::string frame_reference(const std::string& clip_id, int frame) {
  return "clips/" + clip_id + "/frame_" + std::to_string(frame);
}

ChatRequest describe_request(const std::string& image_ref, const std::string& action, const ChatClientConfig& cfg) {
  ChatRequest r;
  r.model = cfg.model;
  r.temperature = cfg.temperature;
  r.messages = {{"system", kDescribeSystemPrompt}, {"user", "Action: " + action + "\nImage: " + image_ref}};
  if (is_url(image_ref)) r.image_url = image_ref;
  return r;
}

ChatRequest implicit_request(const std::string& description, const std::string& action, const ChatClientConfig& cfg) {
  ChatRequest r;
  r.model = cfg.model;
  r.temperature = cfg.temperature;
  r.messages = {{"system", kImplicitSystemPrompt}, {"user", "Action: " + action + "\nDescription: " + description}};
  return r;
}

Annotation describe_scene(const std::string& image_ref, const std::string& action, ChatClient& client,
                          const ChatClientConfig& cfg) {
  const ChatRequest req = describe_request(image_ref, action, cfg);
  Annotation a;
  a.text = client.complete(req);
  a.transcript = {{"request", req.to_json()}, {"response", a.text}};
  return a;
}

bool leaks_action(const std::string& question, const std::string& action) {
  const std::string q = lower(question), act = lower(action);
  if (!act.empty() && q.find(act) != std::string::npos) return true;
  static const std::set<std::string> filler{"the", "a", "an", "some", "up", "of", "to"};
  std::vector<std::string> content;
  for (const auto& w : words(action))
    if (!filler.count(w)) content.push_back(w);
  if (content.size() < 2) return false;
  const auto qw = words(question);
  auto has = [&](const std::string& w) {
    return std::any_of(qw.begin(), qw.end(), [&](const std::string& x) {
      // Inflections share a stem: open/opening, cut/cutting, scissor/scissors.
      const auto& [s, l] = x.size() < w.size() ? std::tie(x, w) : std::tie(w, x);
      return s == l || (s.size() >= 3 && l.size() - s.size() <= 4 && l.compare(0, s.size(), s) == 0);
    });
  };
  return has(content.front()) && has(content.back());
}

Annotation gen_implicit(const std::string& description, const std::string& action, ChatClient& client,
                        const ChatClientConfig& cfg, const tokens::TemplateBank& bank) {
  const ChatRequest req = implicit_request(description, action, cfg);
  Annotation a;
  const std::string raw = client.complete(req);
  a.text = trim_response(raw);
  a.transcript = {{"request", req.to_json()}, {"response", raw}};
  if (!bank.implicit_prefix_of(a.text)) throw ValidationFailed("format", a.transcript);
  if (leaks_action(a.text, action)) throw ValidationFailed("leaked action", a.transcript);
  return a;
}

Rng clip_rng(std::uint64_t seed, const std::string& clip_id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : clip_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return Rng(seed ^ h);
}

std::vector<QASample> gen_vhp(std::span<const gt::GtSample> gt, std::uint64_t seed, const tokens::TemplateBank& bank) {
  std::vector<QASample> out;
  out.reserve(gt.size());
  for (const auto& g : gt) {
    Rng rng = clip_rng(seed, g.clip_id);
    const auto r = tokens::render_template(tokens::TaskKind::kVhp, g.narration, g.future.horizon(), rng, bank);
    QASample s;
    s.clip_id = g.clip_id;
    s.task = tokens::TaskKind::kVhp;
    s.question = r.question;
    s.answer = r.answer;
    s.future = g.future;
    s.instruction = g.narration;
    s.template_id = r.template_id;
    s.validate();
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const QASample& a, const QASample& b) { return a.clip_id < b.clip_id; });
  return out;
}

RbhpResult gen_rbhp(std::span<const gt::GtSample> gt, ChatClient& client, const ChatClientConfig& cfg,
                    std::uint64_t seed, const tokens::TemplateBank& bank) {
  cfg.validate();
  struct Slot {
    std::optional<QASample> sample;
    std::optional<RbhpFailure> failure;
    std::exception_ptr error;
  };
  std::vector<Slot> slots(gt.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < gt.size(); i = next++) {
      const auto& g = gt[i];
      if (!g.narration || g.narration->empty()) {
        slots[i].failure = RbhpFailure{g.clip_id, "no narration", Json(nullptr)};
        continue;
      }
      try {
        const std::string ref = frame_reference(g.clip_id, static_cast<int>(g.context_length) - 1);
        const Annotation desc = describe_scene(ref, *g.narration, client, cfg);
        const Annotation imp = gen_implicit(desc.text, *g.narration, client, cfg, bank);
        Rng rng = clip_rng(seed, g.clip_id);
        const auto r = tokens::render_template(tokens::TaskKind::kRbhp, imp.text, g.future.horizon(), rng, bank);
        QASample s;
        s.clip_id = g.clip_id;
        s.task = tokens::TaskKind::kRbhp;
        s.question = r.question;
        s.answer = r.answer;
        s.future = g.future;
        s.instruction = imp.text;
        s.template_id = r.template_id;
        s.transcript_hash = transcript_hash(Json::array({desc.transcript, imp.transcript}));
        s.validate();
        slots[i].sample = std::move(s);
      } catch (const ValidationFailed& e) {
        slots[i].failure = RbhpFailure{g.clip_id, e.reason(), e.transcript()};
      } catch (...) {
        slots[i].error = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_in_flight), std::max<std::size_t>(gt.size(), 1));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  RbhpResult res;
  for (auto& s : slots) {
    if (s.error) std::rethrow_exception(s.error);
    if (s.sample) res.samples.push_back(std::move(*s.sample));
    if (s.failure) res.failures.push_back(std::move(*s.failure));
  }
  std::sort(res.samples.begin(), res.samples.end(), [](const QASample& a, const QASample& b) { return a.clip_id < b.clip_id; });
  std::sort(res.failures.begin(), res.failures.end(),
            [](const RbhpFailure& a, const RbhpFailure& b) { return a.clip_id < b.clip_id; });
  return res;
}

}  // namespace handtraj::datasetgen
