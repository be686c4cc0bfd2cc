#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace specharness::python {

struct Parameter {
  std::string name;
  bool has_default = false;
};

/// Shallow view of a top-level `def` in Python source. Only the header is
/// scanned; the body is not parsed.
struct FunctionHeader {
  std::string name;
  std::string header_text;  // "def name(...):" verbatim, possibly multi-line
  std::vector<Parameter> positional;  // parameters that accept positional args
  bool var_positional = false;        // *args present
  std::size_t offset = 0;             // byte offset of "def"

  std::size_t required_arity() const;
  std::optional<std::size_t> max_arity() const;  // nullopt when *args present
  bool accepts(std::size_t n_args) const;
  std::vector<std::string> parameter_names() const;
};

/// All `def` (and `async def`) statements starting at column 0.
std::vector<FunctionHeader> top_level_functions(std::string_view source);

/// The unique top-level definition of `name`; nullopt when absent or defined
/// more than once.
std::optional<FunctionHeader> find_function(std::string_view source, std::string_view name);

/// Leading docstring of the function body, when the first statement is a
/// string literal.
std::optional<std::string> docstring_of(std::string_view source, const FunctionHeader& fn);

}  // namespace specharness::python
