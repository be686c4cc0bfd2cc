#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "specharness/exec_protocol.hpp"

namespace specharness::exec {

struct RunnerPoolConfig {
  std::size_t pool_size = 1;
  int default_timeout_ms = kDefaultTimeoutMs;
  std::vector<std::string> runner_launch_command;
  int max_restarts = 3;  // per worker
  int handshake_timeout_ms = 10000;

  void validate() const;
};

class WorkerProcess;

/// A fixed set of runner processes speaking the line protocol over
/// stdin/stdout. Requests go to whichever worker is idle; a worker that
/// crashes or blows the outer 1.5x timeout is killed and relaunched on its
/// next use, until its restart budget is spent.
class RunnerPool final : public Executor {
 public:
  /// Launches and handshakes every worker. Throws ExecError naming the worker
  /// index and its captured stderr on failure.
  explicit RunnerPool(RunnerPoolConfig config);
  ~RunnerPool() override;

  RunnerPool(const RunnerPool&) = delete;
  RunnerPool& operator=(const RunnerPool&) = delete;

  ExecVerdict execute(const ExecRequest& request) override;
  int default_timeout_ms() const override { return config_.default_timeout_ms; }

  std::size_t size() const noexcept { return config_.pool_size; }
  std::size_t live_workers() const;
  std::size_t restarts_used() const;

 private:
  std::size_t acquire();
  void release(std::size_t index);
  bool ensure_running(std::size_t index);

  RunnerPoolConfig config_;
  std::vector<std::unique_ptr<WorkerProcess>> workers_;
  std::vector<int> restarts_;
  std::vector<std::uint8_t> needs_restart_;  // owned by the thread holding the worker
  std::vector<bool> dead_;
  std::vector<std::size_t> idle_;
  std::size_t live_ = 0;
  mutable std::mutex mutex_;
  std::condition_variable idle_cv_;
};

/// Memoizes verdicts of another executor by request content. Worker crashes,
/// protocol errors and timeouts are never cached.
class CachingExecutor final : public Executor {
 public:
  explicit CachingExecutor(Executor& inner) : inner_(inner) {}

  ExecVerdict execute(const ExecRequest& request) override;
  int default_timeout_ms() const override { return inner_.default_timeout_ms(); }

  std::size_t hits() const;
  std::size_t misses() const;

 private:
  Executor& inner_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, ExecVerdict> cache_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace specharness::exec
