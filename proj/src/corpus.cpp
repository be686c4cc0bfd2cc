#include "specharness/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "specharness/error.hpp"

namespace specharness {

namespace fs = std::filesystem;

namespace {

using Kind = CorpusError::Kind;

class FieldReader {
 public:
  FieldReader(const json& j, std::string file, std::string prefix = "")
      : j_(j), file_(std::move(file)), prefix_(std::move(prefix)) {
    if (!j_.is_object()) fail(prefix_.empty() ? "<root>" : prefix_, "expected an object");
  }

  [[noreturn]] void fail(const std::string& field, const std::string& message, Kind kind = Kind::schema) const {
    throw CorpusError(kind, file_, field, message);
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const json& get(const std::string& key) const {
    if (!j_.contains(key)) fail(path(key), "missing");
    return j_.at(key);
  }

  std::string string(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_string()) fail(path(key), "expected a string");
    return v.get<std::string>();
  }

  std::optional<std::string> optional_string(const std::string& key) const {
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    return string(key);
  }

  const json& array(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_array()) fail(path(key), "expected an array");
    return v;
  }

  const std::string& file() const { return file_; }

 private:
  const json& j_;
  std::string file_;
  std::string prefix_;
};

bool is_identifier(const std::string& s) {
  static const std::regex re("[A-Za-z_][A-Za-z0-9_]*");
  return std::regex_match(s, re);
}

void check_schema_version(const FieldReader& r) {
  const auto& v = r.get("schema_version");
  if (!v.is_number_integer() || v.get<int>() != kCorpusSchemaVersion)
    r.fail("schema_version", "unsupported schema version " + v.dump() + " (expected " +
                                 std::to_string(kCorpusSchemaVersion) + ")",
           Kind::schema_version);
}

std::vector<TestInput> read_inputs(const FieldReader& r, const std::string& key) {
  std::vector<TestInput> inputs;
  std::set<std::string> seen;
  const auto& arr = r.array(key);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    FieldReader item(arr[i], r.file(), r.path(key) + "[" + std::to_string(i) + "]");
    TestInput in;
    in.input_id = item.string("input_id");
    in.args = item.array("args");
    in.setup = item.optional_string("setup");
    if (!seen.insert(in.input_id).second) item.fail("input_id", "duplicate input_id " + in.input_id, Kind::duplicate_id);
    inputs.push_back(std::move(in));
  }
  return inputs;
}

python::FunctionHeader require_function(const FieldReader& r, const std::string& field, const std::string& source,
                                        const std::string& name) {
  const auto fn = python::find_function(source, name);
  if (!fn) r.fail(field, "must define top-level function '" + name + "' exactly once");
  return *fn;
}

void check_arity(const FieldReader& r, const std::string& field, const python::FunctionHeader& fn,
                 const std::vector<TestInput>& inputs) {
  for (const auto& in : inputs) {
    if (!fn.accepts(in.args.size()))
      r.fail(field, "input " + in.input_id + " passes " + std::to_string(in.args.size()) + " args to " + fn.name +
                        " which takes " + std::to_string(fn.positional.size()),
             Kind::arity);
  }
}

bool same_arity(const python::FunctionHeader& a, const python::FunctionHeader& b) {
  return a.positional.size() == b.positional.size() && a.required_arity() == b.required_arity() &&
         a.var_positional == b.var_positional;
}

json read_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw CorpusError(Kind::io, file.string(), "<file>", "cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorpusError(Kind::malformed_json, file.string(), "<file>", e.what());
  }
}

struct Listing {
  std::string corpus_id;
  std::vector<fs::path> files;
};

Listing list_entries(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw CorpusError(Kind::io, path.string(), "<path>", "does not exist");
  Listing listing;
  if (fs::is_regular_file(path)) {
    listing.corpus_id = path.stem().string();
    listing.files.push_back(path);
    return listing;
  }
  listing.corpus_id = path.filename().empty() ? path.parent_path().filename().string() : path.filename().string();
  for (const auto& entry : fs::directory_iterator(path, ec)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    if (entry.path().filename() == "manifest.json") {
      const auto m = read_json_file(entry.path());
      FieldReader r(m, entry.path().string());
      check_schema_version(r);
      listing.corpus_id = r.string("corpus_id");
      continue;
    }
    listing.files.push_back(entry.path());
  }
  if (ec) throw CorpusError(Kind::io, path.string(), "<path>", ec.message());
  std::sort(listing.files.begin(), listing.files.end());
  return listing;
}

json inputs_to_json(const std::vector<TestInput>& inputs) {
  json arr = json::array();
  for (const auto& in : inputs) arr.push_back(to_json(in));
  return arr;
}

}  // namespace

std::vector<std::string> TaskSpec::parameter_names() const {
  if (auto fn = python::find_function(implementation, function_name)) return fn->parameter_names();
  return {};
}

std::string TaskSpec::source_for(const TestInput& input, const std::string& impl) const {
  if (!input.setup || input.setup->empty()) return impl;
  return *input.setup + "\n" + impl;
}

TaskSpec task_from_json(const json& j, const std::string& file) {
  FieldReader r(j, file);
  check_schema_version(r);
  TaskSpec t;
  t.task_id = r.string("task_id");
  t.function_name = r.string("function_name");
  if (!is_identifier(t.function_name)) r.fail("function_name", "not an identifier");
  t.signature = r.string("signature");
  t.docstring = r.optional_string("docstring");
  t.implementation = r.string("implementation");
  const auto fn = require_function(r, "implementation", t.implementation, t.function_name);

  t.test_inputs = read_inputs(r, "test_inputs");
  if (t.test_inputs.empty()) r.fail("test_inputs", "must not be empty");
  check_arity(r, "test_inputs", fn, t.test_inputs);

  std::set<std::string> seen;
  const auto& mutants = r.array("mutants");
  for (std::size_t i = 0; i < mutants.size(); ++i) {
    FieldReader m(mutants[i], file, "mutants[" + std::to_string(i) + "]");
    MutantSpec spec{m.string("mutant_id"), m.string("implementation")};
    if (!seen.insert(spec.mutant_id).second) m.fail("mutant_id", "duplicate mutant_id " + spec.mutant_id, Kind::duplicate_id);
    const auto mfn = require_function(m, "implementation", spec.implementation, t.function_name);
    if (!same_arity(fn, mfn)) m.fail("implementation", "arity differs from the reference", Kind::arity);
    t.mutants.push_back(std::move(spec));
  }
  return t;
}

BugPair bugpair_from_json(const json& j, const std::string& file) {
  FieldReader r(j, file);
  check_schema_version(r);
  BugPair p;
  p.pair_id = r.string("pair_id");
  p.correct_impl = r.string("correct_impl");
  p.buggy_impl = r.string("buggy_impl");
  if (auto name = r.optional_string("function_name")) {
    p.function_name = *name;
  } else {
    const auto fns = python::top_level_functions(p.correct_impl);
    if (fns.size() != 1) r.fail("function_name", "required when correct_impl does not define exactly one function");
    p.function_name = fns.front().name;
  }
  const auto correct = require_function(r, "correct_impl", p.correct_impl, p.function_name);
  const auto buggy = require_function(r, "buggy_impl", p.buggy_impl, p.function_name);
  if (!same_arity(correct, buggy)) r.fail("buggy_impl", "arity differs from correct_impl", Kind::arity);

  p.regression_tests = read_inputs(r, "regression_tests");
  p.trigger_tests = read_inputs(r, "trigger_tests");
  if (p.trigger_tests.empty()) r.fail("trigger_tests", "must not be empty");
  for (const auto& t : p.trigger_tests) {
    for (const auto& reg : p.regression_tests)
      if (reg.input_id == t.input_id) r.fail("trigger_tests", "input_id " + t.input_id + " also used by a regression test", Kind::duplicate_id);
  }
  check_arity(r, "regression_tests", correct, p.regression_tests);
  check_arity(r, "trigger_tests", correct, p.trigger_tests);
  return p;
}

json to_json(const TestInput& in) {
  json j{{"input_id", in.input_id}, {"args", in.args}};
  if (in.setup) j["setup"] = *in.setup;
  return j;
}

json to_json(const TaskSpec& t) {
  json mutants = json::array();
  for (const auto& m : t.mutants) mutants.push_back({{"mutant_id", m.mutant_id}, {"implementation", m.implementation}});
  return {{"schema_version", kCorpusSchemaVersion},
          {"task_id", t.task_id},
          {"function_name", t.function_name},
          {"signature", t.signature},
          {"docstring", t.docstring ? json(*t.docstring) : json(nullptr)},
          {"implementation", t.implementation},
          {"test_inputs", inputs_to_json(t.test_inputs)},
          {"mutants", mutants}};
}

json to_json(const BugPair& p) {
  return {{"schema_version", kCorpusSchemaVersion},
          {"pair_id", p.pair_id},
          {"function_name", p.function_name},
          {"correct_impl", p.correct_impl},
          {"buggy_impl", p.buggy_impl},
          {"regression_tests", inputs_to_json(p.regression_tests)},
          {"trigger_tests", inputs_to_json(p.trigger_tests)}};
}

std::string canonical_json(const json& j) { return j.dump(2) + "\n"; }

Corpus load_corpus(const fs::path& path) {
  auto listing = list_entries(path);
  Corpus corpus;
  corpus.manifest.corpus_id = listing.corpus_id;
  std::set<std::string> ids;
  for (const auto& file : listing.files) {
    auto task = task_from_json(read_json_file(file), file.string());
    if (!ids.insert(task.task_id).second)
      throw CorpusError(Kind::duplicate_id, file.string(), "task_id", "duplicate task_id \"" + task.task_id + "\"");
    corpus.manifest.entries.push_back(task.task_id);
    corpus.tasks.push_back(std::move(task));
  }
  return corpus;
}

BugCorpus load_bugpair_corpus(const fs::path& path) {
  auto listing = list_entries(path);
  BugCorpus corpus;
  corpus.manifest.corpus_id = listing.corpus_id;
  std::set<std::string> ids;
  for (const auto& file : listing.files) {
    auto pair = bugpair_from_json(read_json_file(file), file.string());
    if (!ids.insert(pair.pair_id).second)
      throw CorpusError(Kind::duplicate_id, file.string(), "pair_id", "duplicate pair_id \"" + pair.pair_id + "\"");
    corpus.manifest.entries.push_back(pair.pair_id);
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

std::vector<std::pair<TestInput, json>> materialize_expected_outputs(TaskSpec& task, exec::Executor& executor,
                                                                     bool check_determinism, int timeout_ms) {
  std::vector<json> outputs;
  outputs.reserve(task.test_inputs.size());
  for (const auto& in : task.test_inputs) {
    const auto source = task.source_for(in, task.implementation);
    const auto v = executor.run_function(source, task.function_name, in.args, timeout_ms);
    if (!v.ok())
      throw InvalidTaskError(task.task_id, in.input_id,
                             std::string(exec::to_string(v.status)) + " " + v.error_type + ": " + v.error_message);
    if (check_determinism) {
      const auto again = executor.run_function(source, task.function_name, in.args, timeout_ms);
      if (!again.ok() || again.value != v.value)
        throw InvalidTaskError(task.task_id, in.input_id, "reference output is not deterministic");
    }
    outputs.push_back(v.value.value_or(json(nullptr)));
  }
  task.expected_outputs = outputs;
  std::vector<std::pair<TestInput, json>> pairs;
  for (std::size_t i = 0; i < outputs.size(); ++i) pairs.emplace_back(task.test_inputs[i], outputs[i]);
  return pairs;
}

TaskSpec task_from_bugpair(const BugPair& pair) {
  TaskSpec t;
  t.task_id = pair.pair_id;
  t.function_name = pair.function_name;
  t.implementation = pair.correct_impl;
  if (auto fn = python::find_function(pair.correct_impl, pair.function_name)) {
    t.signature = fn->header_text;
    t.docstring = python::docstring_of(pair.correct_impl, *fn);
  }
  t.test_inputs = pair.regression_tests;
  t.test_inputs.insert(t.test_inputs.end(), pair.trigger_tests.begin(), pair.trigger_tests.end());
  t.mutants.push_back({pair.pair_id + "/buggy", pair.buggy_impl});
  return t;
}

}  // namespace specharness
