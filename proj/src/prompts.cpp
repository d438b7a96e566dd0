#include <algorithm>

#include "coffee/clients.hpp"
#include "prompt_assets.inc"

namespace coffee {
namespace {

bool is_name_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_name_char(char c) {
  return is_name_start(c) || (c >= '0' && c <= '9') || c == ' ';
}

template <std::size_t N>
std::string asset(const unsigned char (&bytes)[N]) {
  return std::string(reinterpret_cast<const char*>(bytes), N);
}

}  // namespace

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::correct_feedback: return "correct_feedback";
    case TemplateId::wrong_feedback: return "wrong_feedback";
    case TemplateId::testcase_gen: return "testcase_gen";
    case TemplateId::editor: return "editor";
    case TemplateId::g_eval: return "g_eval";
  }
  return "editor";
}

std::optional<TemplateId> parse_template_id(std::string_view name) {
  for (auto id : {TemplateId::correct_feedback, TemplateId::wrong_feedback,
                  TemplateId::testcase_gen, TemplateId::editor, TemplateId::g_eval}) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

PromptTemplate::PromptTemplate(TemplateId id, std::string body,
                               std::map<std::string, std::string> aliases)
    : id_(id), body_(std::move(body)) {
  std::string literal;
  std::size_t i = 0;
  while (i < body_.size()) {
    if (body_[i] == '{' && i + 1 < body_.size() && is_name_start(body_[i + 1])) {
      std::size_t j = i + 1;
      while (j < body_.size() && is_name_char(body_[j])) ++j;
      if (j < body_.size() && body_[j] == '}' && body_[j - 1] != ' ') {
        if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
        literal.clear();
        std::string name = body_.substr(i + 1, j - i - 1);
        if (auto it = aliases.find(name); it != aliases.end()) name = it->second;
        pieces_.push_back({true, std::move(name)});
        i = j + 1;
        continue;
      }
    }
    literal += body_[i++];
  }
  if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
}

const PromptTemplate& PromptTemplate::builtin(TemplateId id) {
  static const PromptTemplate correct_feedback(TemplateId::correct_feedback,
                                               asset(kPrompt_correct_feedback));
  static const PromptTemplate wrong_feedback(TemplateId::wrong_feedback,
                                             asset(kPrompt_wrong_feedback));
  static const PromptTemplate testcase_gen(
      TemplateId::testcase_gen, asset(kPrompt_testcase_gen),
      {{"input format", "input_format"}, {"python code", "correct_code"}});
  static const PromptTemplate editor(TemplateId::editor, asset(kPrompt_editor));
  static const PromptTemplate g_eval(TemplateId::g_eval, asset(kPrompt_g_eval));
  switch (id) {
    case TemplateId::correct_feedback: return correct_feedback;
    case TemplateId::wrong_feedback: return wrong_feedback;
    case TemplateId::testcase_gen: return testcase_gen;
    case TemplateId::editor: return editor;
    case TemplateId::g_eval: return g_eval;
  }
  return editor;
}

std::vector<std::string> PromptTemplate::required() const {
  std::vector<std::string> names;
  for (const auto& p : pieces_) {
    if (p.is_placeholder &&
        std::find(names.begin(), names.end(), p.text) == names.end()) {
      names.push_back(p.text);
    }
  }
  return names;
}

std::string PromptTemplate::render_pieces(const Bindings& bindings,
                                          std::size_t end) const {
  std::string out;
  for (std::size_t i = 0; i < end; ++i) {
    const Piece& p = pieces_[i];
    if (!p.is_placeholder) {
      out += p.text;
      continue;
    }
    auto it = bindings.find(p.text);
    if (it == bindings.end()) {
      throw Error(ErrorCode::invalid_request, p.text + " unbound");
    }
    out += it->second;
  }
  return out;
}

std::string PromptTemplate::render(const Bindings& bindings) const {
  return render_pieces(bindings, pieces_.size());
}

std::string PromptTemplate::render_prefix(const Bindings& bindings,
                                          std::string_view stop) const {
  std::size_t end = 0;
  while (end < pieces_.size() &&
         !(pieces_[end].is_placeholder && pieces_[end].text == stop)) {
    ++end;
  }
  return render_pieces(bindings, end);
}

Bindings editor_bindings(const Problem& problem, std::string_view wrong_code,
                         std::string_view feedback) {
  return {{"description", problem.description},
          {"input_format", problem.input_format},
          {"output_format", problem.output_format},
          {"wrong_code", std::string(wrong_code)},
          {"feedback", std::string(feedback)}};
}

}  // namespace coffee
