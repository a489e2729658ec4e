#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "paint/workflow.hpp"

namespace httplib {
class Server;
}

namespace paint {

struct ServiceConfig {
  std::string bundle_dir;
  std::string dataset_path;
  /// Label file; defaults to <bundle_dir>/labels.jsonl.
  std::string labels_path;
  RewardConfig reward;
  Td3bcConfig td3;
  EvalConfig eval;
};

enum class JobStatus { kQueued, kRunning, kDone, kFailed };
std::string to_string(JobStatus s);

struct Job {
  std::size_t id = 0;
  std::string kind;
  nlohmann::json params;
  JobStatus status = JobStatus::kQueued;
  std::string error_code;
  std::string error;
  nlohmann::json result;
};

/// Backend for the sketching UI. Reads are served concurrently; training jobs
/// run one at a time on a worker thread in submission order.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves until stop(). Returns false when the port cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds to a free port, serves on a background thread; returns the port.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

  std::string bundle_name() const;
  /// Blocks until no job is queued or running.
  void wait_idle();

 private:
  void routes();
  void worker();
  std::size_t submit(const std::string& kind, nlohmann::json params);
  void run_job(Job& job);
  nlohmann::json job_json(const Job& job) const;

  ServiceConfig config_;
  LoadedDataset dataset_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;

  mutable std::mutex labels_mu_;
  LabelSet labels_;

  mutable std::mutex bundle_mu_;
  PolicyBundle bundle_;
  std::optional<nlohmann::ordered_json> report_cache_;

  mutable std::mutex jobs_mu_;
  std::condition_variable jobs_cv_;
  std::condition_variable idle_cv_;
  std::map<std::size_t, Job> jobs_;
  std::deque<std::size_t> queue_;
  std::size_t next_job_ = 1;
  bool running_job_ = false;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace paint
