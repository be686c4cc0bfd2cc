#include "specharness/runner_pool.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "specharness/error.hpp"

extern char** environ;

namespace specharness::exec {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ms(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

ExecVerdict client_verdict(const ExecRequest& r, Status status, std::string type, std::string message,
                           Clock::time_point start) {
  ExecVerdict v;
  v.request_id = r.request_id;
  v.status = status;
  v.error_type = std::move(type);
  v.error_message = std::move(message);
  v.duration_ms = elapsed_ms(start);
  return v;
}

void ignore_sigpipe_once() {
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

}  // namespace

void RunnerPoolConfig::validate() const {
  if (pool_size < 1) throw std::invalid_argument("pool_size must be >= 1");
  if (default_timeout_ms <= 0) throw std::invalid_argument("default_timeout_ms must be positive");
  if (runner_launch_command.empty()) throw std::invalid_argument("runner_launch_command is empty");
  if (max_restarts < 0) throw std::invalid_argument("max_restarts must be >= 0");
}

enum class ReadStatus { line, eof, timeout };

class WorkerProcess {
 public:
  WorkerProcess(const std::vector<std::string>& argv, std::size_t index) : index_(index) {
    char tmpl[] = "/tmp/specharness-worker-XXXXXX";
    stderr_fd_ = ::mkstemp(tmpl);
    if (stderr_fd_ < 0) throw ExecError("worker " + std::to_string(index) + ": cannot create stderr capture");
    stderr_path_ = tmpl;
    ::fcntl(stderr_fd_, F_SETFD, FD_CLOEXEC);

    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw ExecError("pipe failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw ExecError("pipe failed");
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, stderr_fd_, STDERR_FILENO);

    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    const int rc = ::posix_spawnp(&pid_, cargv[0], &actions, nullptr, cargv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
    if (rc != 0) {
      pid_ = -1;
      throw ExecError("worker " + std::to_string(index) + ": cannot launch '" + argv.front() +
                      "': " + std::strerror(rc));
    }
  }

  ~WorkerProcess() {
    terminate();
    if (stderr_fd_ >= 0) ::close(stderr_fd_);
    if (!stderr_path_.empty()) ::unlink(stderr_path_.c_str());
  }

  WorkerProcess(const WorkerProcess&) = delete;
  WorkerProcess& operator=(const WorkerProcess&) = delete;

  void handshake(int timeout_ms) {
    std::string line;
    const auto status = read_line(Clock::now() + std::chrono::milliseconds(timeout_ms), line);
    if (status == ReadStatus::line && line == kHandshakeLine) return;
    std::string why = status == ReadStatus::timeout ? "handshake timed out"
                      : status == ReadStatus::eof   ? "exited before handshake"
                                                    : "bad handshake line: " + line;
    // Give a crashing process a moment to flush its stderr.
    if (status == ReadStatus::eof) reap(std::chrono::milliseconds(200));
    throw ExecError("worker " + std::to_string(index_) + ": " + why + "; stderr: " + captured_stderr());
  }

  bool write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const auto n = ::write(in_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  ReadStatus read_line(Clock::time_point deadline, std::string& line) {
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return ReadStatus::line;
      }
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (remaining <= 0) return ReadStatus::timeout;
      pollfd pfd{out_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(remaining));
      if (rc < 0) {
        if (errno == EINTR) continue;
        return ReadStatus::eof;
      }
      if (rc == 0) return ReadStatus::timeout;
      char chunk[65536];
      const auto n = ::read(out_fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return ReadStatus::eof;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string captured_stderr() const {
    std::ifstream in(stderr_path_);
    std::stringstream ss;
    ss << in.rdbuf();
    auto text = ss.str();
    constexpr std::size_t kMax = 4000;
    if (text.size() > kMax) text = "..." + text.substr(text.size() - kMax);
    return text;
  }

  void terminate() {
    if (in_fd_ >= 0) ::close(in_fd_);
    if (out_fd_ >= 0) ::close(out_fd_);
    in_fd_ = out_fd_ = -1;
    if (pid_ > 0 && !reap(std::chrono::milliseconds(200))) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
    pid_ = -1;
  }

  void kill_now() {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
    terminate();
  }

 private:
  bool reap(std::chrono::milliseconds grace) {
    const auto until = Clock::now() + grace;
    while (Clock::now() < until) {
      const auto rc = ::waitpid(pid_, nullptr, WNOHANG);
      if (rc == pid_ || rc < 0) {
        pid_ = -1;
        return true;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    return false;
  }

  std::size_t index_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  int stderr_fd_ = -1;
  std::string stderr_path_;
  std::string buffer_;
};

RunnerPool::RunnerPool(RunnerPoolConfig config) : config_(std::move(config)) {
  config_.validate();
  ignore_sigpipe_once();
  const auto n = config_.pool_size;
  restarts_.assign(n, 0);
  needs_restart_.assign(n, 0);
  dead_.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    auto worker = std::make_unique<WorkerProcess>(config_.runner_launch_command, i);
    worker->handshake(config_.handshake_timeout_ms);
    workers_.push_back(std::move(worker));
    idle_.push_back(n - 1 - i);
  }
  live_ = n;
}

RunnerPool::~RunnerPool() = default;

std::size_t RunnerPool::live_workers() const {
  std::lock_guard lock(mutex_);
  return live_;
}

std::size_t RunnerPool::restarts_used() const {
  std::lock_guard lock(mutex_);
  std::size_t total = 0;
  for (const int r : restarts_) total += static_cast<std::size_t>(r);
  return total;
}

std::size_t RunnerPool::acquire() {
  for (;;) {
    std::size_t index = 0;
    {
      std::unique_lock lock(mutex_);
      idle_cv_.wait(lock, [&] { return !idle_.empty() || live_ == 0; });
      if (live_ == 0) throw ExecError("runner pool has no live workers");
      index = idle_.back();
      idle_.pop_back();
    }
    if (ensure_running(index)) return index;
  }
}

void RunnerPool::release(std::size_t index) {
  {
    std::lock_guard lock(mutex_);
    idle_.push_back(index);
  }
  idle_cv_.notify_one();
}

// Relaunches a worker flagged for restart. The caller owns `index`. Returns
// false (and retires the worker) once its restart budget is spent.
bool RunnerPool::ensure_running(std::size_t index) {
  if (!needs_restart_[index]) return true;
  bool ok = false;
  bool budget_left = false;
  {
    std::lock_guard lock(mutex_);
    budget_left = restarts_[index] < config_.max_restarts;
    if (budget_left) ++restarts_[index];
  }
  if (budget_left) {
    try {
      workers_[index].reset();
      auto worker = std::make_unique<WorkerProcess>(config_.runner_launch_command, index);
      worker->handshake(config_.handshake_timeout_ms);
      workers_[index] = std::move(worker);
      needs_restart_[index] = 0;
      ok = true;
    } catch (const ExecError&) {
      ok = false;
    }
  }
  if (!ok) {
    {
      std::lock_guard lock(mutex_);
      dead_[index] = true;
      --live_;
    }
    idle_cv_.notify_all();
  }
  return ok;
}

ExecVerdict RunnerPool::execute(const ExecRequest& request) {
  request.validate();
  const auto start = Clock::now();
  const auto index = acquire();
  auto& worker = *workers_[index];

  ExecVerdict verdict;
  if (!worker.write_line(to_json(request).dump())) {
    needs_restart_[index] = 1;
    verdict = client_verdict(request, Status::runtime_error, "worker_crash", "worker closed its input", start);
  } else {
    // The worker enforces timeout_ms itself; this outer bound catches code it
    // cannot interrupt.
    const int t = request.timeout_ms;
    const auto deadline = start + std::chrono::milliseconds(t + t / 2);
    std::string line;
    switch (worker.read_line(deadline, line)) {
      case ReadStatus::line:
        try {
          verdict = verdict_from_json(json::parse(line));
          if (verdict.request_id != request.request_id) throw std::invalid_argument("request_id mismatch");
        } catch (const std::exception& e) {
          needs_restart_[index] = 1;
          verdict = client_verdict(request, Status::runtime_error, "protocol_error",
                                   std::string("bad response line: ") + e.what(), start);
        }
        break;
      case ReadStatus::timeout:
        worker.kill_now();
        needs_restart_[index] = 1;
        verdict = client_verdict(request, Status::timeout, "timeout",
                                 "no response within " + std::to_string(t + t / 2) + " ms", start);
        break;
      case ReadStatus::eof:
        worker.kill_now();
        needs_restart_[index] = 1;
        verdict = client_verdict(request, Status::runtime_error, "worker_crash",
                                 "worker exited; stderr: " + worker.captured_stderr(), start);
        break;
    }
  }
  release(index);
  return verdict;
}

ExecVerdict CachingExecutor::execute(const ExecRequest& request) {
  auto keyed = to_json(request);
  keyed.erase("request_id");
  const auto key = keyed.dump();
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++hits_;
      auto v = it->second;
      v.request_id = request.request_id;
      return v;
    }
    ++misses_;
  }
  auto verdict = inner_.execute(request);
  const bool cacheable = verdict.status != Status::timeout && verdict.error_type != "worker_crash" &&
                         verdict.error_type != "protocol_error";
  if (cacheable) {
    std::lock_guard lock(mutex_);
    cache_.emplace(key, verdict);
  }
  return verdict;
}

std::size_t CachingExecutor::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::size_t CachingExecutor::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

}  // namespace specharness::exec
