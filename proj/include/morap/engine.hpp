#pragma once

// Parallel execution of independent model-checking jobs. One bounded FIFO
// queue per compute backend, each owned by a manager thread; the first
// backend is the CPU worker pool, further queues drive stub accelerators.
// Managers whose queue runs dry request work from their peers over a
// message channel before falling back to a direct locked pop, so no queue
// starves while others hold jobs.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif

#include "morap/common.hpp"
#include "morap/model.hpp"
#include "morap/numerics.hpp"

namespace morap {

enum class JobKind { Optimize, Evaluate };

// Move-only work item: the model handle is handed to exactly one worker.
struct Job {
  long id = 0;
  JobKind kind = JobKind::Optimize;
  std::shared_ptr<const ProductMdp> model;
  RewardStructure reward;
  Scheduler scheduler;  // evaluate only
  double eps = 1e-6;
  int sweepCap = 100000;

  Job() = default;
  Job(Job&&) = default;
  Job& operator=(Job&&) = default;
  Job(const Job&) = delete;
  Job& operator=(const Job&) = delete;
};

struct JobResult {
  bool ok = false;
  std::string error;  // failure reason when !ok; other jobs are unaffected
  std::optional<Errc> errc;  // set when the failure carried a library error code
  double value = 0.0;
  Vec values;
  Scheduler policy;  // optimize only
  SweepStats stats;
};

struct PoolConfig {
  int workers = 1;   // CPU worker threads serving queue 0
  int queues = 1;    // 1 + number of stub accelerator backends
  int capacity = 64; // per-queue bound
  std::function<int(long)> assignQueue;   // job index -> queue; default round-robin
  std::function<void(long)> onJobExecuted;  // instrumentation hook (tests)
};

inline int defaultWorkerCount() {
  if (const char* env = std::getenv("MORAP_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 4096)
      fail(Errc::InvalidConfig, "MORAP_WORKERS must be a positive integer");
    return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline PoolConfig configurePool(int workers, int queues = 1, int capacity = 64) {
  if (workers < 1) fail(Errc::InvalidConfig, "worker count must be at least 1");
  if (queues < 1) fail(Errc::InvalidConfig, "queue count must be at least 1");
  if (capacity < 1) fail(Errc::InvalidConfig, "queue capacity must be at least 1");
  PoolConfig cfg;
  cfg.workers = workers;
  cfg.queues = queues;
  cfg.capacity = capacity;
  return cfg;
}

inline PoolConfig defaultPoolConfig() { return configurePool(defaultWorkerCount(), 1, 64); }

struct Topology {
  int queues = 0;
  int workers = 0;
  std::vector<std::string> backends;        // per queue
  std::vector<std::vector<int>> stealPeers; // per queue
};

inline Topology poolTopology(const PoolConfig& cfg) {
  Topology t;
  t.queues = cfg.queues;
  t.workers = cfg.workers;
  for (int q = 0; q < cfg.queues; ++q) {
    t.backends.push_back(q == 0 ? "cpu" : "stub");
    std::vector<int> peers;
    for (int p = 0; p < cfg.queues; ++p)
      if (p != q) peers.push_back(p);
    t.stealPeers.push_back(std::move(peers));
  }
  return t;
}

namespace enginedetail {

inline JobResult executeJob(const Job& job) {
  JobResult res;
  try {
    if (!job.model) fail(Errc::InvalidModel, "job carries no model");
    if (job.kind == JobKind::Optimize) {
      OptimizeResult r = optimalScheduler(*job.model, job.reward, job.eps, job.sweepCap);
      res.value = r.value;
      res.values = std::move(r.values);
      res.policy = std::move(r.policy);
      res.stats = r.stats;
    } else {
      EvaluateResult r = evaluateScheduler(*job.model, job.scheduler, job.reward, job.eps,
                                           job.sweepCap);
      res.value = r.value;
      res.values = std::move(r.values);
      res.stats = r.stats;
    }
    res.ok = true;
  } catch (const Error& e) {
    res.ok = false;
    res.error = e.what();
    res.errc = e.code();
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
  } catch (...) {
    res.ok = false;
    res.error = "unknown job panic";
  }
  return res;
}

struct BoundedQueue {
  std::mutex mu;
  std::condition_variable canPush;
  std::deque<Job> q;
  size_t capacity = 64;

  void push(Job j) {
    std::unique_lock<std::mutex> lk(mu);
    canPush.wait(lk, [&] { return q.size() < capacity; });
    q.push_back(std::move(j));
  }
  bool tryPop(Job& out) {
    std::lock_guard<std::mutex> lk(mu);
    if (q.empty()) return false;
    out = std::move(q.front());
    q.pop_front();
    canPush.notify_one();
    return true;
  }
};

// One-shot reply slot for a steal request. The requester may abandon the
// wait; whoever holds the slot mutex decides what happens to the job.
struct StealReply {
  std::mutex mu;
  std::condition_variable cv;
  bool answered = false;
  bool abandoned = false;
  std::optional<Job> job;
};

struct StealInbox {
  std::mutex mu;
  std::deque<std::shared_ptr<StealReply>> pending;

  void post(std::shared_ptr<StealReply> r) {
    std::lock_guard<std::mutex> lk(mu);
    pending.push_back(std::move(r));
  }
  std::shared_ptr<StealReply> take() {
    std::lock_guard<std::mutex> lk(mu);
    if (pending.empty()) return nullptr;
    std::shared_ptr<StealReply> r = std::move(pending.front());
    pending.pop_front();
    return r;
  }
};

struct WorkerSlot {
  std::mutex mu;
  std::condition_variable cv;
  std::optional<Job> job;
  bool stop = false;
};

struct Engine {
  const PoolConfig& cfg;
  std::vector<std::unique_ptr<BoundedQueue>> queues;
  std::vector<std::unique_ptr<StealInbox>> inboxes;
  std::vector<std::unique_ptr<WorkerSlot>> slots;
  std::mutex idleMu;
  std::condition_variable idleCv;
  std::vector<int> idleWorkers;
  std::mutex resultMu;
  std::map<long, JobResult> results;
  std::atomic<long> remaining{0};

  explicit Engine(const PoolConfig& c) : cfg(c) {}

  void record(long id, JobResult res) {
    {
      std::lock_guard<std::mutex> lk(resultMu);
      results[id] = std::move(res);
    }
    if (cfg.onJobExecuted) cfg.onJobExecuted(id);
    remaining.fetch_sub(1);
  }

  void runOnCaller(Job job) {
    long id = job.id;
    record(id, executeJob(job));
  }

  // Hand the job to an idle CPU worker; blocks until one frees up.
  void dispatchCpu(Job job) {
    int wid;
    {
      std::unique_lock<std::mutex> lk(idleMu);
      idleCv.wait(lk, [&] { return !idleWorkers.empty(); });
      wid = idleWorkers.back();
      idleWorkers.pop_back();
    }
    WorkerSlot& slot = *slots[wid];
    {
      std::lock_guard<std::mutex> lk(slot.mu);
      slot.job = std::move(job);
    }
    slot.cv.notify_one();
  }

  void dispatch(int qid, Job job) {
    if (qid == 0)
      dispatchCpu(std::move(job));
    else
      runOnCaller(std::move(job));  // stub accelerator: synchronous on its manager
  }

  void workerLoop(int wid) {
    WorkerSlot& slot = *slots[wid];
    while (true) {
      Job job;
      {
        std::unique_lock<std::mutex> lk(slot.mu);
        slot.cv.wait(lk, [&] { return slot.stop || slot.job.has_value(); });
        if (slot.stop && !slot.job.has_value()) return;
        job = std::move(*slot.job);
        slot.job.reset();
      }
      long id = job.id;
      record(id, executeJob(job));
      {
        std::lock_guard<std::mutex> lk(idleMu);
        idleWorkers.push_back(wid);
      }
      idleCv.notify_one();
    }
  }

  // Answer at most a few pending steal requests from this queue.
  void serviceSteals(int qid) {
    for (int k = 0; k < 4; ++k) {
      std::shared_ptr<StealReply> r = inboxes[qid]->take();
      if (!r) return;
      Job j;
      bool has = queues[qid]->tryPop(j);
      std::unique_lock<std::mutex> lk(r->mu);
      if (r->abandoned) {
        lk.unlock();
        if (has) dispatch(qid, std::move(j));  // requester left; run it here
        continue;
      }
      r->answered = true;
      if (has) r->job = std::move(j);
      lk.unlock();
      r->cv.notify_one();
    }
  }

  bool requestSteal(int victim, Job& out) {
    auto reply = std::make_shared<StealReply>();
    inboxes[victim]->post(reply);
    std::unique_lock<std::mutex> lk(reply->mu);
    reply->cv.wait_for(lk, std::chrono::milliseconds(2), [&] { return reply->answered; });
    if (!reply->answered) {
      reply->abandoned = true;
      return false;
    }
    if (!reply->job.has_value()) return false;
    out = std::move(*reply->job);
    return true;
  }

  // Stubs run jobs synchronously, so reaching the idle path means idle; the
  // CPU pool is idle once at least one worker is waiting for a job.
  bool backendIdle(int qid) {
    if (qid != 0) return true;
    std::lock_guard<std::mutex> lk(idleMu);
    return !idleWorkers.empty();
  }

  void managerLoop(int qid) {
    while (true) {
      serviceSteals(qid);
      Job job;
      if (queues[qid]->tryPop(job)) {
        dispatch(qid, std::move(job));
        continue;
      }
      if (remaining.load() == 0) return;
      if (cfg.queues > 1 && backendIdle(qid)) {
        bool got = false;
        for (int round = 0; round < 3 && !got; ++round) {
          for (int step = 1; step < cfg.queues && !got; ++step)
            got = requestSteal((qid + step) % cfg.queues, job);
          if (!got) std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
        if (!got)  // victims unresponsive: direct locked pop
          for (int step = 1; step < cfg.queues && !got; ++step)
            got = queues[(qid + step) % cfg.queues]->tryPop(job);
        if (got) {
          dispatch(qid, std::move(job));
          continue;
        }
      }
      if (remaining.load() == 0) return;
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
  }
};

inline void pinToCore(std::thread& t, int core) {
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(core % std::max(1u, std::thread::hardware_concurrency()), &set);
  pthread_setaffinity_np(t.native_handle(), sizeof(set), &set);  // best effort
#else
  (void)t;
  (void)core;
#endif
}

}  // namespace enginedetail

// Runs every job to completion and returns one result per job id. Results
// are identical to sequential execution regardless of worker or queue count.
inline std::map<long, JobResult> runBatch(std::vector<Job> jobs, const PoolConfig& cfg) {
  if (cfg.workers < 1 || cfg.queues < 1 || cfg.capacity < 1)
    fail(Errc::InvalidConfig, "invalid pool configuration");
  if (jobs.empty()) return {};
  {
    std::map<long, bool> ids;
    for (const Job& j : jobs)
      if (!ids.emplace(j.id, true).second)
        fail(Errc::InvalidConfig, "duplicate job id " + std::to_string(j.id));
  }

  enginedetail::Engine eng(cfg);
  eng.remaining.store(static_cast<long>(jobs.size()));
  for (int q = 0; q < cfg.queues; ++q) {
    eng.queues.push_back(std::make_unique<enginedetail::BoundedQueue>());
    eng.queues.back()->capacity = static_cast<size_t>(cfg.capacity);
    eng.inboxes.push_back(std::make_unique<enginedetail::StealInbox>());
  }
  for (int w = 0; w < cfg.workers; ++w) {
    eng.slots.push_back(std::make_unique<enginedetail::WorkerSlot>());
    eng.idleWorkers.push_back(w);
  }

  std::vector<std::thread> workers;
  for (int w = 0; w < cfg.workers; ++w) {
    workers.emplace_back([&eng, w] { eng.workerLoop(w); });
    enginedetail::pinToCore(workers.back(), w);
  }
  std::vector<std::thread> managers;
  for (int q = 0; q < cfg.queues; ++q) managers.emplace_back([&eng, q] { eng.managerLoop(q); });

  for (long k = 0; k < static_cast<long>(jobs.size()); ++k) {
    int q = cfg.assignQueue ? cfg.assignQueue(k) : static_cast<int>(k % cfg.queues);
    if (q < 0 || q >= cfg.queues) {
      eng.remaining.store(0);  // unblock managers before failing
      for (auto& m : managers) m.join();
      for (auto& s : eng.slots) {
        std::lock_guard<std::mutex> lk(s->mu);
        s->stop = true;
        s->cv.notify_one();
      }
      for (auto& w : workers) w.join();
      fail(Errc::InvalidConfig, "queue assignment out of range");
    }
    eng.queues[q]->push(std::move(jobs[k]));
  }

  for (auto& m : managers) m.join();
  for (auto& s : eng.slots) {
    std::lock_guard<std::mutex> lk(s->mu);
    s->stop = true;
    s->cv.notify_one();
  }
  for (auto& w : workers) w.join();
  return eng.results;
}

}  // namespace morap
