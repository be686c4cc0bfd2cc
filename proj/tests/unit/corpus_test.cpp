#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "specharness/corpus.hpp"
#include "specharness/error.hpp"
#include "specharness/runner_pool.hpp"
#include "test_support.hpp"

using namespace specharness;
namespace support = specharness::testing;
namespace fs = std::filesystem;

namespace {

exec::RunnerPool& pool() {
  static exec::RunnerPool p(support::stub_pool_config(1));
  return p;
}

json minimal_task() {
  return json::parse(R"({
    "schema_version": 1, "task_id": "t", "function_name": "f", "signature": "def f(a, b):",
    "implementation": "def f(a, b):\n    return a + b\n",
    "test_inputs": [{"input_id": "i0", "args": [1, 2]}],
    "mutants": [{"mutant_id": "m1", "implementation": "def f(a, b):\n    return a - b\n"}]
  })");
}

CorpusError::Kind kind_of(const json& j) {
  try {
    task_from_json(j, "x.json");
  } catch (const CorpusError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no CorpusError for " << j.dump();
  return CorpusError::Kind::io;
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("specharness-corpus-" + std::to_string(::getpid()) + "-" +
                                                std::to_string(counter_++))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  void write(const std::string& name, const std::string& text) const { std::ofstream(path_ / name) << text; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

}  // namespace

TEST(Corpus, LoadsShippedCorpora) {
  const auto micro = load_corpus(support::data_dir() / "micro");
  EXPECT_EQ(micro.manifest.corpus_id, "micro");
  EXPECT_EQ(micro.tasks.size(), 20u);
  EXPECT_EQ(micro.manifest.entries.size(), 20u);
  EXPECT_TRUE(std::is_sorted(micro.manifest.entries.begin(), micro.manifest.entries.end()));

  const auto search = load_corpus(support::data_dir() / "search");
  ASSERT_EQ(search.tasks.size(), 1u);
  EXPECT_EQ(search.manifest.corpus_id, "search");  // no manifest: directory name
  EXPECT_EQ(search.tasks[0].parameter_names(), std::vector<std::string>{"lst"});
  EXPECT_EQ(search.tasks[0].mutants.size(), 4u);

  const auto pairs = load_bugpair_corpus(support::data_dir() / "bugpairs");
  EXPECT_EQ(pairs.pairs.size(), 6u);
  EXPECT_EQ(pairs.pairs[0].function_name, "absolute");  // derived from the only def
}

TEST(Corpus, SingleFileLoads) {
  const auto c = load_corpus(support::data_dir() / "eat" / "eat.json");
  ASSERT_EQ(c.tasks.size(), 1u);
  EXPECT_EQ(c.tasks[0].task_id, "eat");
}

TEST(Corpus, SchemaViolationsNameTheField) {
  auto j = minimal_task();
  j["schema_version"] = 2;
  EXPECT_EQ(kind_of(j), CorpusError::Kind::schema_version);

  j = minimal_task();
  j.erase("signature");
  try {
    task_from_json(j, "x.json");
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.kind(), CorpusError::Kind::schema);
    EXPECT_EQ(e.file(), "x.json");
    EXPECT_EQ(e.field(), "signature");
  }

  j = minimal_task();
  j["test_inputs"] = json::array();
  EXPECT_EQ(kind_of(j), CorpusError::Kind::schema);

  j = minimal_task();
  j["test_inputs"][0]["args"] = json::array({1});
  EXPECT_EQ(kind_of(j), CorpusError::Kind::arity);

  j = minimal_task();
  j["mutants"][0]["implementation"] = "def f(a):\n    return a\n";
  EXPECT_EQ(kind_of(j), CorpusError::Kind::arity);

  j = minimal_task();
  j["mutants"].push_back(j["mutants"][0]);
  EXPECT_EQ(kind_of(j), CorpusError::Kind::duplicate_id);

  j = minimal_task();
  j["implementation"] = "def g(a, b):\n    return a\n";
  EXPECT_EQ(kind_of(j), CorpusError::Kind::schema);

  j = minimal_task();
  j["test_inputs"].push_back(j["test_inputs"][0]);
  EXPECT_EQ(kind_of(j), CorpusError::Kind::duplicate_id);
}

TEST(Corpus, HelpersBesideTheFunctionAreAllowed) {
  auto j = minimal_task();
  j["implementation"] = "import math\n\ndef _helper(v):\n    return v\n\ndef f(a, b):\n    return _helper(a) + b\n";
  EXPECT_NO_THROW(task_from_json(j));
}

TEST(Corpus, DuplicateTaskIdsAcrossFiles) {
  TempDir dir;
  dir.write("a.json", minimal_task().dump());
  dir.write("b.json", minimal_task().dump());
  try {
    load_corpus(dir.path());
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.kind(), CorpusError::Kind::duplicate_id);
    EXPECT_NE(std::string(e.what()).find("t"), std::string::npos);
  }
}

TEST(Corpus, MalformedJsonNamesTheFile) {
  TempDir dir;
  dir.write("bad.json", "{\"schema_version\": 1,");
  try {
    load_corpus(dir.path());
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.kind(), CorpusError::Kind::malformed_json);
    EXPECT_NE(e.file().find("bad.json"), std::string::npos);
  }
}

TEST(Corpus, CanonicalRoundTrip) {
  const auto task = task_from_json(minimal_task());
  const auto text = canonical_json(to_json(task));
  EXPECT_EQ(canonical_json(to_json(task_from_json(json::parse(text)))), text);
  EXPECT_EQ(text.back(), '\n');
}

TEST(Corpus, MaterializeExpectedOutputs) {
  auto task = load_corpus(support::data_dir() / "search").tasks.at(0);
  EXPECT_FALSE(task.has_expected_outputs());
  const auto pairs = materialize_expected_outputs(task, pool());
  ASSERT_TRUE(task.has_expected_outputs());
  std::vector<json> outs;
  for (const auto& [in, out] : pairs) outs.push_back(out);
  // Values computed by hand from the frequency rule.
  EXPECT_EQ(outs, (std::vector<json>{2, 3, -1, 1, -1}));
}

TEST(Corpus, ReferenceFailureInvalidatesTask) {
  auto j = minimal_task();
  j["implementation"] = "def f(a, b):\n    return a / b\n";
  j["test_inputs"] = json::parse(R"([{"input_id": "ok", "args": [1, 2]}, {"input_id": "zero", "args": [1, 0]}])");
  auto task = task_from_json(j);
  try {
    materialize_expected_outputs(task, pool());
    FAIL();
  } catch (const InvalidTaskError& e) {
    EXPECT_EQ(e.input_id(), "zero");
  }
}

TEST(Corpus, NondeterministicReferenceIsRejected) {
  auto j = minimal_task();
  j["implementation"] = "import random\ndef f(a, b):\n    return random.random()\n";
  auto task = task_from_json(j);
  EXPECT_THROW(materialize_expected_outputs(task, pool()), InvalidTaskError);
}

TEST(Corpus, SetupCodeIsPrepended) {
  auto j = minimal_task();
  j["implementation"] = "def f(a, b):\n    return OFFSET + a + b\n";
  j["test_inputs"][0]["setup"] = "OFFSET = 100";
  auto task = task_from_json(j);
  const auto out = materialize_expected_outputs(task, pool());
  EXPECT_EQ(out[0].second, 103);
}

TEST(Corpus, TaskFromBugPair) {
  const auto pairs = load_bugpair_corpus(support::data_dir() / "bugpairs");
  const auto& pair = *std::find_if(pairs.pairs.begin(), pairs.pairs.end(),
                                   [](const BugPair& p) { return p.pair_id == "bp_sum_range"; });
  const auto task = task_from_bugpair(pair);
  EXPECT_EQ(task.task_id, "bp_sum_range");
  EXPECT_EQ(task.function_name, "sum_range");
  ASSERT_EQ(task.mutants.size(), 1u);
  EXPECT_EQ(task.mutants[0].mutant_id, "bp_sum_range/buggy");
  ASSERT_EQ(task.test_inputs.size(), 3u);
  EXPECT_EQ(task.test_inputs[0].input_id, "r0");  // regression first, then trigger
  EXPECT_EQ(task.test_inputs[1].input_id, "g0");
}

TEST(Corpus, BugPairNeedsTriggers) {
  auto j = json::parse(R"({"schema_version": 1, "pair_id": "p", "correct_impl": "def f(x):\n    return x\n",
    "buggy_impl": "def f(x):\n    return -x\n", "regression_tests": [], "trigger_tests": []})");
  EXPECT_THROW(bugpair_from_json(j), CorpusError);
}
