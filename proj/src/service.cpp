#include "paint/service.hpp"

#include <cmath>
#include <filesystem>

#include <httplib.h>

#include "paint/error.hpp"

namespace paint {

std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::kQueued: return "queued";
    case JobStatus::kRunning: return "running";
    case JobStatus::kDone: return "done";
    case JobStatus::kFailed: return "failed";
  }
  return "unknown";
}

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return 400;
    case ErrorCode::kDuplicateLabel: return 409;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kInsufficientLabels: return 422;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), {{"error", std::string(to_string(code))}, {"message", message}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, ErrorCode::kInvalidArgument, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
  };
}

SketchLabel parse_label(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("episode_id") || !j.contains("t") || !j.contains("reward")) {
    throw Error(ErrorCode::kInvalidArgument, "label needs episode_id, t and reward");
  }
  if (!j["episode_id"].is_number_integer() || !j["t"].is_number_unsigned() || !j["reward"].is_number()) {
    throw Error(ErrorCode::kInvalidArgument, "label fields have the wrong type");
  }
  SketchLabel l{j["episode_id"].get<std::int64_t>(), j["t"].get<std::size_t>(), j["reward"].get<double>()};
  l.validate();
  return l;
}

}  // namespace

Service::Service(ServiceConfig config)
    : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  if (config_.labels_path.empty()) {
    config_.labels_path = (std::filesystem::path(config_.bundle_dir) / "labels.jsonl").string();
  }
  dataset_ = load_dataset(config_.dataset_path);
  bundle_ = PolicyBundle::load(config_.bundle_dir);
  if (!bundle_.dataset_hash.empty() && bundle_.dataset_hash != dataset_.data.hash()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset does not match the bundle");
  }
  if (std::filesystem::exists(config_.labels_path)) labels_ = LabelSet::load(config_.labels_path);
  routes();
  worker_ = std::thread([this] { worker(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(jobs_mu_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

std::string Service::bundle_name() const {
  auto p = std::filesystem::path(config_.bundle_dir).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

bool Service::listen(const std::string& host, int port) { return server_->listen(host, port); }

int Service::start_background(const std::string& host) {
  const int port = server_->bind_to_any_port(host);
  if (port < 0) throw Error(ErrorCode::kIo, "cannot bind a port on " + host);
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::stop() {
  server_->stop();
  if (listener_.joinable()) listener_.join();
}

void Service::wait_idle() {
  std::unique_lock lock(jobs_mu_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && !running_job_; });
}

void Service::routes() {
  auto& s = *server_;

  s.Get("/episodes", guarded([this](const httplib::Request&, httplib::Response& res) {
    auto out = nlohmann::ordered_json::array();
    std::lock_guard lock(labels_mu_);
    for (const auto& e : dataset_.data.episodes) {
      out.push_back({{"id", e.episode_id},
                     {"patient_id", e.patient_id},
                     {"samples", e.size()},
                     {"start_clock", e.start_clock},
                     {"terminated", e.terminated},
                     {"labels", labels_.episode(e.episode_id).size()}});
    }
    send_json(res, 200, out);
  }));

  s.Get(R"(/episodes/(-?\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = std::stoll(req.matches[1].str());
    const Trajectory* traj = nullptr;
    for (const auto& e : dataset_.data.episodes) {
      if (e.episode_id == id) traj = &e;
    }
    if (!traj) throw Error(ErrorCode::kNotFound, "no episode " + std::to_string(id));
    std::size_t count = 0;
    if (req.has_param("downsample")) {
      const std::string v = req.get_param_value("downsample");
      if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw Error(ErrorCode::kInvalidArgument, "downsample must be a non-negative integer");
      }
      count = std::stoull(v);
    }
    const auto idx = downsample_indices(traj->size(), count);
    nlohmann::ordered_json t = nlohmann::ordered_json::array(), g = t, b = t, bo = t, c = t, ix = t;
    for (auto i : idx) {
      ix.push_back(i);
      t.push_back(traj->t[i]);
      g.push_back(traj->glucose[i]);
      b.push_back(traj->basal[i]);
      bo.push_back(traj->bolus[i]);
      c.push_back(traj->carbs[i]);
    }
    send_json(res, 200,
              {{"id", id}, {"samples", idx.size()}, {"stored_samples", traj->size()}, {"index", ix},
               {"t", t}, {"glucose", g}, {"basal", b}, {"bolus", bo}, {"carbs", c}});
  }));

  s.Get("/labels", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(labels_mu_);
    const auto labels = req.has_param("episode_id")
                            ? labels_.episode(std::stoll(req.get_param_value("episode_id")))
                            : labels_.labels();
    auto out = nlohmann::ordered_json::array();
    for (const auto& l : labels) out.push_back({{"episode_id", l.episode_id}, {"t", l.t}, {"reward", l.reward}});
    send_json(res, 200, out);
  }));

  s.Post("/labels", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const auto& arr = body.is_object() && body.contains("labels") ? body["labels"] : body;
    if (!arr.is_array()) throw Error(ErrorCode::kInvalidArgument, "expected a list of labels");
    std::vector<SketchLabel> batch;
    for (const auto& j : arr) {
      batch.push_back(parse_label(j));
      if (resolve_label(dataset_.data, batch.back()) >= dataset_.data.size()) {
        throw Error(ErrorCode::kNotFound, "label refers to a sample outside the dataset");
      }
    }
    std::lock_guard lock(labels_mu_);
    LabelSet next = labels_;
    next.add_all(batch);
    next.save(config_.labels_path);
    labels_ = std::move(next);
    send_json(res, 200, {{"accepted", batch.size()}, {"total", labels_.size()}});
  }));

  s.Post("/jobs/train-reward", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 202, {{"job_id", submit("train-reward", nlohmann::json::object())}});
  }));

  s.Post("/jobs/tune", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
    if (!body.is_object() || !body.contains("lambda") || !body["lambda"].is_number()) {
      throw Error(ErrorCode::kInvalidArgument, "tune needs a numeric lambda");
    }
    const double lambda = body["lambda"].get<double>();
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
    send_json(res, 202, {{"job_id", submit("tune", {{"lambda", lambda}})}});
  }));

  s.Get(R"(/jobs/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = std::stoull(req.matches[1].str());
    std::lock_guard lock(jobs_mu_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) throw Error(ErrorCode::kNotFound, "no job " + std::to_string(id));
    send_json(res, 200, job_json(it->second));
  }));

  s.Get(R"(/reports/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    if (req.matches[1].str() != bundle_name()) {
      throw Error(ErrorCode::kNotFound, "no bundle " + req.matches[1].str());
    }
    std::lock_guard lock(bundle_mu_);
    if (!report_cache_) {
      report_cache_ = report_json(report_bundle(bundle_, config_.eval), bundle_);
      (*report_cache_)["bundle"] = bundle_name();
    }
    send_json(res, 200, *report_cache_);
  }));
}

std::size_t Service::submit(const std::string& kind, nlohmann::json params) {
  std::size_t id;
  {
    std::lock_guard lock(jobs_mu_);
    id = next_job_++;
    Job job;
    job.id = id;
    job.kind = kind;
    job.params = std::move(params);
    jobs_.emplace(id, std::move(job));
    queue_.push_back(id);
  }
  jobs_cv_.notify_all();
  return id;
}

void Service::worker() {
  for (;;) {
    Job job;
    {
      std::unique_lock lock(jobs_mu_);
      jobs_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      const auto id = queue_.front();
      queue_.pop_front();
      running_job_ = true;
      jobs_[id].status = JobStatus::kRunning;
      job = jobs_[id];
    }
    try {
      run_job(job);
      job.status = JobStatus::kDone;
    } catch (const Error& e) {
      job.status = JobStatus::kFailed;
      job.error_code = std::string(to_string(e.code()));
      job.error = e.what();
    } catch (const std::exception& e) {
      job.status = JobStatus::kFailed;
      job.error_code = "internal";
      job.error = e.what();
    }
    {
      std::lock_guard lock(jobs_mu_);
      jobs_[job.id] = job;
      running_job_ = false;
    }
    idle_cv_.notify_all();
  }
}

void Service::run_job(Job& job) {
  if (job.kind == "train-reward") {
    LabelSet labels;
    {
      std::lock_guard lock(labels_mu_);
      labels = labels_;
    }
    PolicyBundle next;
    {
      std::lock_guard lock(bundle_mu_);
      next = bundle_;
    }
    train_reward_into(next, dataset_, labels, config_.reward);
    std::lock_guard lock(bundle_mu_);
    next.save(config_.bundle_dir);
    bundle_ = std::move(next);
    report_cache_.reset();
    job.result = {{"labels", labels.size()},
                  {"validation_loss", bundle_.reward->validation_loss},
                  {"best_epoch", bundle_.reward->best_epoch},
                  {"epochs_run", bundle_.reward->epochs_run}};
    return;
  }
  if (job.kind == "tune") {
    PolicyBundle next;
    {
      std::lock_guard lock(bundle_mu_);
      next = bundle_;
    }
    tune_into(next, dataset_, job.params.at("lambda").get<double>(), config_.td3);
    const auto report = report_json(report_bundle(next, config_.eval), next);
    std::lock_guard lock(bundle_mu_);
    next.save(config_.bundle_dir);
    bundle_ = std::move(next);
    report_cache_ = report;
    (*report_cache_)["bundle"] = bundle_name();
    job.result = {{"lambda", bundle_.lambda}, {"report", "/reports/" + bundle_name()}};
    return;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown job kind " + job.kind);
}

nlohmann::json Service::job_json(const Job& job) const {
  nlohmann::json j{{"id", job.id}, {"kind", job.kind}, {"status", to_string(job.status)}, {"params", job.params}};
  if (job.status == JobStatus::kFailed) j["error"] = {{"code", job.error_code}, {"message", job.error}};
  if (job.status == JobStatus::kDone) j["result"] = job.result;
  return j;
}

}  // namespace paint
