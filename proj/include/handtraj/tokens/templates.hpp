#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "handtraj/common/rng.hpp"

namespace handtraj::tokens {

enum class TaskKind { kVhp, kRbhp };

std::string task_name(TaskKind k);
TaskKind task_from_name(const std::string& name);

// Question/answer templates parsed from the bundled resource. Templates
// use {action} for the instruction and {hands} for the hand tokens.
class TemplateBank {
 public:
  static const TemplateBank& builtin();
  static TemplateBank parse(std::string_view text);

  // Only the first template of each section and no action-restating
  // answers: "can you give me the future hand trajectory for {action}?" /
  // "Sure, it is {hands}." with the bundled bank.
  TemplateBank canonical() const;

  const std::vector<std::string>& questions_action_free() const { return q_free_; }
  const std::vector<std::string>& questions_action() const { return q_action_; }
  const std::vector<std::string>& answers_action_free() const { return a_free_; }
  const std::vector<std::string>& answers_action() const { return a_action_; }
  const std::vector<std::string>& implicit_prefixes() const { return prefixes_; }

  // The matched prefix if `question` opens with one of the implicit
  // question prefixes.
  std::optional<std::string> implicit_prefix_of(std::string_view question) const;

 private:
  std::vector<std::string> q_free_, q_action_, a_free_, a_action_, prefixes_;
};

struct RenderedTemplate {
  std::string question;
  std::string answer;  // contains n_steps "<HAND>" markers
  std::string template_id;
};

// VHP: action-conditioned question when an instruction is given, action-free
// otherwise; the answer may restate the action. RBHP: the instruction is an
// implicit request; it is used verbatim when it already reads as a
// trajectory question and is otherwise inserted into an action question.
// RBHP answers never restate it.
RenderedTemplate render_template(TaskKind kind, const std::optional<std::string>& instruction, std::size_t n_steps,
                                 Rng& rng, const TemplateBank& bank = TemplateBank::builtin());

std::string hand_markers(std::size_t n);

std::string fill_template(std::string_view tmpl, std::string_view action, std::string_view hands);

}  // namespace handtraj::tokens
