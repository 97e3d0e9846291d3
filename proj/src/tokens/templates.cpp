#include "handtraj/tokens/templates.hpp"

#include <sstream>

#include "handtraj/common/error.hpp"
#include "handtraj/tokens/vocab.hpp"
#include "templates_data.hpp"

namespace handtraj::tokens {

std::string task_name(TaskKind k) { return k == TaskKind::kVhp ? "vhp" : "rbhp"; }

TaskKind task_from_name(const std::string& name) {
  if (name == "vhp" || name == "VHP") return TaskKind::kVhp;
  if (name == "rbhp" || name == "RBHP") return TaskKind::kRbhp;
  throw ConfigError("unknown task '" + name + "'");
}

TemplateBank TemplateBank::parse(std::string_view text) {
  TemplateBank b;
  std::vector<std::string>* section = nullptr;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      const std::string name = line.substr(1, line.size() - 2);
      if (name == "question.action_free") section = &b.q_free_;
      else if (name == "question.action") section = &b.q_action_;
      else if (name == "answer.action_free") section = &b.a_free_;
      else if (name == "answer.action") section = &b.a_action_;
      else if (name == "implicit.prefix") section = &b.prefixes_;
      else throw ConfigError("unknown template section [" + name + "]");
      continue;
    }
    if (section == nullptr) throw ConfigError("template line outside a section: " + line);
    section->push_back(line);
  }
  if (b.q_free_.empty() || b.q_action_.empty() || b.a_free_.empty() || b.prefixes_.empty()) {
    throw ConfigError("template bank is missing a section");
  }
  return b;
}

const TemplateBank& TemplateBank::builtin() {
  static const TemplateBank bank = parse(detail::kTemplateBankText);
  return bank;
}

TemplateBank TemplateBank::canonical() const {
  TemplateBank b = *this;
  auto first = [](std::vector<std::string>& v) {
    if (v.size() > 1) v.resize(1);
  };
  first(b.q_free_);
  first(b.q_action_);
  first(b.a_free_);
  b.a_action_.clear();
  return b;
}

std::optional<std::string> TemplateBank::implicit_prefix_of(std::string_view question) const {
  for (const auto& p : prefixes_) {
    if (question.size() >= p.size() && question.compare(0, p.size(), p) == 0) return p;
  }
  return std::nullopt;
}

std::string hand_markers(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += kHandMarker;
  return s;
}

std::string fill_template(std::string_view tmpl, std::string_view action, std::string_view hands) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.compare(i, 8, "{action}") == 0) {
      out += action;
      i += 8;
    } else if (tmpl.compare(i, 7, "{hands}") == 0) {
      out += hands;
      i += 7;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

namespace {

std::string strip_question_mark(std::string s) {
  while (!s.empty() && (s.back() == '?' || s.back() == '.' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

RenderedTemplate render_template(TaskKind kind, const std::optional<std::string>& instruction, std::size_t n_steps,
                                 Rng& rng, const TemplateBank& bank) {
  if (n_steps < 1) throw ConfigError("render_template: n_steps must be at least 1");
  const std::string hands = hand_markers(n_steps);
  RenderedTemplate r;
  const bool has_action = instruction && !instruction->empty();

  std::size_t qi = 0;
  std::string qkind;
  if (kind == TaskKind::kRbhp && has_action && bank.implicit_prefix_of(*instruction)) {
    r.question = *instruction;
    qkind = "qi";
  } else if (has_action) {
    const std::string action = kind == TaskKind::kRbhp ? strip_question_mark(*instruction) : *instruction;
    qi = rng.index(bank.questions_action().size());
    r.question = fill_template(bank.questions_action()[qi], action, "");
    qkind = "qa" + std::to_string(qi);
  } else {
    qi = rng.index(bank.questions_action_free().size());
    r.question = bank.questions_action_free()[qi];
    qkind = "qf" + std::to_string(qi);
  }

  const bool restate = kind == TaskKind::kVhp && has_action && !bank.answers_action().empty();
  const std::size_t n_free = bank.answers_action_free().size();
  const std::size_t n_total = n_free + (restate ? bank.answers_action().size() : 0);
  const std::size_t ai = rng.index(n_total);
  if (ai < n_free) {
    r.answer = fill_template(bank.answers_action_free()[ai], "", hands);
    r.template_id = qkind + "/af" + std::to_string(ai);
  } else {
    r.answer = fill_template(bank.answers_action()[ai - n_free], *instruction, hands);
    r.template_id = qkind + "/aa" + std::to_string(ai - n_free);
  }
  return r;
}

}  // namespace handtraj::tokens
