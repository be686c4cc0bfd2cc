#include "specharness/python_source.hpp"

#include <algorithm>
#include <cctype>

namespace specharness::python {

namespace {

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Index just past the string literal starting at `i` (which must point at a
// quote character). Handles triple quotes and backslash escapes.
std::size_t skip_string(std::string_view src, std::size_t i) {
  const char q = src[i];
  const bool triple = i + 2 < src.size() && src[i + 1] == q && src[i + 2] == q;
  i += triple ? 3 : 1;
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\\') {
      i += 2;
      continue;
    }
    if (triple) {
      if (c == q && i + 2 < src.size() && src[i + 1] == q && src[i + 2] == q) return i + 3;
    } else if (c == q || c == '\n') {
      return i + 1;
    }
    ++i;
  }
  return src.size();
}

// Index of the bracket matching the opener at `open`, skipping strings.
std::optional<std::size_t> match_bracket(std::string_view src, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < src.size();) {
    const char c = src[i];
    if (c == '"' || c == '\'') {
      i = skip_string(src, i);
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '(' || c == '[' || c == '{') ++depth;
    if (c == ')' || c == ']' || c == '}') {
      if (--depth == 0) return i;
    }
    ++i;
  }
  return std::nullopt;
}

std::vector<std::string_view> split_top_level(std::string_view s) {
  std::vector<std::string_view> parts;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size();) {
    const char c = s[i];
    if (c == '"' || c == '\'') {
      i = skip_string(s, i);
      continue;
    }
    if (c == '(' || c == '[' || c == '{') ++depth;
    if (c == ')' || c == ']' || c == '}') --depth;
    if (c == ',' && depth == 0) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
    ++i;
  }
  parts.push_back(s.substr(start));
  return parts;
}

void parse_parameters(std::string_view params, FunctionHeader& fn) {
  for (auto raw : split_top_level(params)) {
    auto p = trim(raw);
    if (p.empty() || p == "/") continue;
    if (p.starts_with("**")) break;
    if (p.starts_with('*')) {
      fn.var_positional = trim(p.substr(1)).size() > 0;
      break;
    }
    const auto stop = p.find_first_of(":=");
    Parameter param;
    param.name = std::string(trim(p.substr(0, stop)));
    param.has_default = p.find('=') != std::string_view::npos;
    fn.positional.push_back(std::move(param));
  }
}

std::optional<FunctionHeader> parse_header(std::string_view src, std::size_t def_pos) {
  std::size_t i = def_pos;
  if (src.substr(i).starts_with("async")) i += 5;
  while (i < src.size() && std::isspace(static_cast<unsigned char>(src[i]))) ++i;
  if (!src.substr(i).starts_with("def")) return std::nullopt;
  i += 3;
  while (i < src.size() && (src[i] == ' ' || src[i] == '\t')) ++i;
  const std::size_t name_start = i;
  while (i < src.size() && is_ident_char(src[i])) ++i;
  if (i == name_start) return std::nullopt;

  FunctionHeader fn;
  fn.name = std::string(src.substr(name_start, i - name_start));
  fn.offset = def_pos;
  while (i < src.size() && (src[i] == ' ' || src[i] == '\t')) ++i;
  if (i >= src.size() || src[i] != '(') return std::nullopt;
  const auto close = match_bracket(src, i);
  if (!close) return std::nullopt;
  parse_parameters(src.substr(i + 1, *close - i - 1), fn);

  // Colon ending the header, past an optional return annotation.
  std::size_t j = *close + 1;
  while (j < src.size() && src[j] != ':' && src[j] != '\n') {
    if (src[j] == '(' || src[j] == '[') {
      if (auto m = match_bracket(src, j)) {
        j = *m + 1;
        continue;
      }
    }
    ++j;
  }
  if (j >= src.size() || src[j] != ':') return std::nullopt;
  fn.header_text = std::string(src.substr(def_pos, j + 1 - def_pos));
  return fn;
}

}  // namespace

std::size_t FunctionHeader::required_arity() const {
  return static_cast<std::size_t>(std::count_if(positional.begin(), positional.end(),
                                                [](const Parameter& p) { return !p.has_default; }));
}

std::optional<std::size_t> FunctionHeader::max_arity() const {
  if (var_positional) return std::nullopt;
  return positional.size();
}

bool FunctionHeader::accepts(std::size_t n_args) const {
  if (n_args < required_arity()) return false;
  const auto max = max_arity();
  return !max || n_args <= *max;
}

std::vector<std::string> FunctionHeader::parameter_names() const {
  std::vector<std::string> names;
  names.reserve(positional.size());
  for (const auto& p : positional) names.push_back(p.name);
  return names;
}

std::vector<FunctionHeader> top_level_functions(std::string_view src) {
  std::vector<FunctionHeader> out;
  bool line_start = true;
  for (std::size_t i = 0; i < src.size();) {
    const char c = src[i];
    if (line_start && (src.substr(i).starts_with("def ") || src.substr(i).starts_with("async def "))) {
      if (auto fn = parse_header(src, i)) out.push_back(std::move(*fn));
    }
    line_start = false;
    if (c == '"' || c == '\'') {
      i = skip_string(src, i);
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '\n') line_start = true;
    ++i;
  }
  return out;
}

std::optional<FunctionHeader> find_function(std::string_view source, std::string_view name) {
  std::optional<FunctionHeader> found;
  for (auto& fn : top_level_functions(source)) {
    if (fn.name != name) continue;
    if (found) return std::nullopt;
    found = std::move(fn);
  }
  return found;
}

std::optional<std::string> docstring_of(std::string_view source, const FunctionHeader& fn) {
  std::size_t i = fn.offset + fn.header_text.size();
  while (i < source.size() && std::isspace(static_cast<unsigned char>(source[i]))) ++i;
  std::size_t lit = i;
  while (lit < source.size() && std::string_view("rRuUbB").find(source[lit]) != std::string_view::npos &&
         lit - i < 2)
    ++lit;
  if (lit >= source.size() || (source[lit] != '"' && source[lit] != '\'')) return std::nullopt;
  const auto end = skip_string(source, lit);
  return std::string(source.substr(i, end - i));
}

}  // namespace specharness::python
