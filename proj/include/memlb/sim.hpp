#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "memlb/errors.hpp"
#include "memlb/jobsize.hpp"
#include "memlb/memory.hpp"
#include "memlb/policy.hpp"
#include "memlb/rng.hpp"

namespace memlb {

struct SimConfig {
  int N = 100;
  double lambda = 0.5;  // per-server arrival rate
  Policy policy = Policy::sq;
  MemorySchemeSpec scheme;  // scheme.d is the probe count
  JobSizeDistribution dist = make_exponential(1.0);
  double sim_time = 0;          // 0 means 1e6 / N
  double warmup_fraction = 1.0 / 3.0;
  std::uint64_t seed = 1;
  int replications = 1;
  bool one_at_a_time = false;   // sequential probing for none, bcp and ism
  bool probe_with_replacement = true;
  int batches = 20;             // batch means when there is a single replication
  int queue_tail_levels = 0;    // > 0 records P{queue length >= k}, k = 1..levels
  bool audit = false;
  int jobs = 1;                 // worker threads for replications

  int d() const { return scheme.d; }
  double horizon() const { return sim_time > 0 ? sim_time : 1e6 / N; }

  void validate() const {
    if (N < 1) throw InvalidParameter("server count N must be at least 1");
    scheme.validate();
    if (!probe_with_replacement && scheme.d > N)
      throw InvalidParameter("probe count d exceeds the number of servers");
    if (!(lambda > 0)) throw InvalidParameter("arrival rate must be positive");
    if (!(lambda * dist.mean() < 1)) throw InstabilityError("unstable configuration: lambda * E[G] >= 1");
    if (!(sim_time >= 0)) throw InvalidParameter("sim_time must be positive");
    if (!(warmup_fraction >= 0 && warmup_fraction < 1)) throw InvalidParameter("warmup_fraction must lie in [0, 1)");
    if (replications < 1) throw InvalidParameter("replications must be at least 1");
    if (batches < 2) throw InvalidParameter("at least two batches are needed for batch means");
    if (queue_tail_levels < 0) throw InvalidParameter("queue_tail_levels must be nonnegative");
  }
};

// Point estimate with its standard error.
struct Estimate {
  double mean = 0;
  double stderr_ = 0;
};

inline Estimate estimate_from(const std::vector<double>& xs) {
  Estimate e;
  if (xs.empty()) return e;
  double s = 0;
  for (double x : xs) s += x;
  e.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - e.mean) * (x - e.mean);
    e.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return e;
}

// Statistics of a single replication, each also split into batches by arrival time.
struct ReplicationResult {
  std::uint64_t seed = 0;
  std::uint64_t jobs = 0;  // post-warmup arrivals
  double mean_response = 0, pi0 = 0, probes = 0, messages = 0, busy = 0;
  std::vector<double> queue_tail;
  std::vector<double> batch_response, batch_pi0, batch_probes, batch_messages, batch_busy;
  std::vector<std::vector<double>> batch_queue_tail;
  double mean_memory = 0;  // time-average over arrivals in the window
  std::size_t final_memory = 0;
  std::uint64_t audit_checks = 0;
};

struct SimReport {
  Estimate mean_response, empirical_pi0, probes_per_arrival, messages_per_arrival, busy_fraction;
  std::vector<Estimate> queue_tail;  // index k-1 holds P{Q >= k}
  std::uint64_t jobs_measured = 0;
  int replications = 0;
  std::vector<std::uint64_t> seeds;
  double mean_memory_occupancy = 0;
  std::uint64_t audit_checks = 0;
};

namespace detail {

// Idle-id memory with O(1) insert, membership and uniform removal.
class IdMemory {
 public:
  explicit IdMemory(int n) : pos_(static_cast<std::size_t>(n), -1) {}
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  bool contains(int s) const { return pos_[static_cast<std::size_t>(s)] >= 0; }
  const std::vector<int>& ids() const { return ids_; }

  void insert(int s) {
    pos_[static_cast<std::size_t>(s)] = static_cast<int>(ids_.size());
    ids_.push_back(s);
  }

  int take_random(RandomStream& rng) {
    const auto i = static_cast<std::size_t>(rng.below(ids_.size()));
    const int s = ids_[i];
    ids_[i] = ids_.back();
    pos_[static_cast<std::size_t>(ids_[i])] = static_cast<int>(i);
    ids_.pop_back();
    pos_[static_cast<std::size_t>(s)] = -1;
    return s;
  }

 private:
  std::vector<int> ids_;
  std::vector<int> pos_;
};

class Simulator {
 public:
  Simulator(const SimConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        rng_(seed),
        busy_until_(static_cast<std::size_t>(cfg.N), 0.0),
        departures_(cfg.policy == Policy::sq || cfg.queue_tail_levels > 0 ? static_cast<std::size_t>(cfg.N) : 0),
        memory_(cfg.N) {
    result_.seed = seed;
    const Scheme s = cfg.scheme.scheme;
    capacity_ = std::numeric_limits<std::size_t>::max();
    if (s == Scheme::bcp || s == Scheme::ism) capacity_ = static_cast<std::size_t>(cfg.scheme.capacity_or_throw());
    if (s == Scheme::ip) capacity_ = static_cast<std::size_t>(cfg.scheme.d - 1);
  }

  ReplicationResult run() {
    const double T = cfg_.horizon();
    const double t0 = cfg_.warmup_fraction * T;
    const double window = T - t0;
    const int B = cfg_.batches;
    const double arrival_rate = cfg_.lambda * cfg_.N;
    const int levels = cfg_.queue_tail_levels;

    std::vector<double> b_resp(B, 0), b_jobs(B, 0), b_empty(B, 0), b_probes(B, 0), b_msgs(B, 0), b_busy(B, 0);
    std::vector<std::vector<double>> b_tail(B, std::vector<double>(static_cast<std::size_t>(levels), 0.0));
    double memory_sum = 0;

    window_start_ = t0;
    window_end_ = T;
    batch_len_ = window / B;
    busy_batches_ = &b_busy;
    msg_batches_ = &b_msgs;

    double t = 0;
    for (;;) {
      t += rng_.exponential(arrival_rate);
      if (t >= T) break;
      drain_notifications(t);
      const bool measured = t >= t0;
      const int b = measured ? std::min(B - 1, static_cast<int>((t - t0) / batch_len_)) : 0;
      if (measured) {
        b_jobs[b] += 1;
        memory_sum += static_cast<double>(memory_.size());
        if (memory_.empty()) b_empty[b] += 1;
      }
      if (measured && levels > 0) {
        // Arrivals see time averages: sample a random server's queue before dispatching.
        const int s = static_cast<int>(rng_.below(static_cast<std::uint64_t>(cfg_.N)));
        const auto q = queue_length(s, t);
        for (int k = 1; k <= levels && static_cast<std::size_t>(k) <= q; ++k) b_tail[b][static_cast<std::size_t>(k - 1)] += 1;
      }
      probes_ = 0;
      const double response = dispatch(t);
      if (measured) {
        b_resp[b] += response;
        b_probes[b] += probes_;
      }
      if (cfg_.audit) audit(t);
    }
    drain_notifications(T);

    ReplicationResult& r = result_;
    double jobs = 0, resp = 0, empty = 0, probes = 0, msgs = 0, busy = 0;
    std::vector<double> tail(static_cast<std::size_t>(levels), 0.0);
    for (int b = 0; b < B; ++b) {
      jobs += b_jobs[b];
      resp += b_resp[b];
      empty += b_empty[b];
      probes += b_probes[b];
      msgs += b_msgs[b];
      busy += b_busy[b];
      const double nb = std::max(b_jobs[b], 1.0);
      r.batch_response.push_back(b_resp[b] / nb);
      r.batch_pi0.push_back(b_empty[b] / nb);
      r.batch_probes.push_back(b_probes[b] / nb);
      r.batch_messages.push_back(b_msgs[b] / nb);
      r.batch_busy.push_back(b_busy[b] / (cfg_.N * batch_len_));
      std::vector<double> bt(static_cast<std::size_t>(levels));
      for (int k = 0; k < levels; ++k) {
        bt[static_cast<std::size_t>(k)] = b_tail[b][static_cast<std::size_t>(k)] / nb;
        tail[static_cast<std::size_t>(k)] += b_tail[b][static_cast<std::size_t>(k)];
      }
      r.batch_queue_tail.push_back(std::move(bt));
    }
    const double nj = std::max(jobs, 1.0);
    r.jobs = static_cast<std::uint64_t>(jobs);
    r.mean_response = resp / nj;
    r.pi0 = empty / nj;
    r.probes = probes / nj;
    r.messages = msgs / nj;
    r.busy = busy / (cfg_.N * window);
    for (double& x : tail) x /= nj;
    r.queue_tail = std::move(tail);
    r.mean_memory = memory_sum / nj;
    r.final_memory = memory_.size();
    return r;
  }

 private:
  bool idle(int s, double t) const { return busy_until_[static_cast<std::size_t>(s)] <= t; }

  std::size_t queue_length(int s, double t) {
    auto& q = departures_[static_cast<std::size_t>(s)];
    while (!q.empty() && q.front() <= t) q.pop_front();
    return q.size();
  }

  double workload(int s, double t) const { return std::max(0.0, busy_until_[static_cast<std::size_t>(s)] - t); }

  // Places a job on server s at time t and returns its response time.
  double assign(int s, double t) {
    const auto i = static_cast<std::size_t>(s);
    const double found = workload(s, t);
    const double size = cfg_.dist.sample(rng_);
    const double start = std::max(t, busy_until_[i]);
    busy_until_[i] = start + size;
    if (!departures_.empty()) departures_[i].push_back(busy_until_[i]);
    add_busy_time(start, busy_until_[i]);
    if (cfg_.scheme.scheme == Scheme::ism) notifications_.push({busy_until_[i], s});
    const double response = busy_until_[i] - t;
    if (cfg_.audit && std::abs(response - (found + size)) > 1e-9 * std::max(1.0, response))
      violation("response time differs from found workload plus job size", t);
    return response;
  }

  // Busy time of [a, b) inside the window, credited to batches.
  void add_busy_time(double a, double b) {
    a = std::max(a, window_start_);
    b = std::min(b, window_end_);
    int k = std::min(cfg_.batches - 1, static_cast<int>((a - window_start_) / batch_len_));
    while (a < b) {
      const double end = k == cfg_.batches - 1 ? b : std::min(b, window_start_ + (k + 1) * batch_len_);
      if (end > a) {
        (*busy_batches_)[static_cast<std::size_t>(k)] += end - a;
        a = end;
      }
      ++k;
    }
  }

  // ISM: servers that emptied before time t notify the dispatcher in time order.
  void drain_notifications(double t) {
    while (!notifications_.empty() && notifications_.top().first <= t) {
      const auto [when, s] = notifications_.top();
      notifications_.pop();
      if (busy_until_[static_cast<std::size_t>(s)] != when) continue;  // took more work before emptying
      if (when >= window_start_ && when < window_end_) {
        const int k = std::min(cfg_.batches - 1, static_cast<int>((when - window_start_) / batch_len_));
        (*msg_batches_)[static_cast<std::size_t>(k)] += 1;
      }
      if (memory_.size() < capacity_) memory_.insert(s);
    }
  }

  // Uniform servers in draw order; distinct unless probing with replacement.
  void draw_probes(int count) {
    probe_ids_.clear();
    while (static_cast<int>(probe_ids_.size()) < count) draw_one_more_probe();
  }

  int draw_one_more_probe() {
    for (;;) {
      const int s = static_cast<int>(rng_.below(static_cast<std::uint64_t>(cfg_.N)));
      if (cfg_.probe_with_replacement || std::find(probe_ids_.begin(), probe_ids_.end(), s) == probe_ids_.end()) {
        probe_ids_.push_back(s);
        return s;
      }
    }
  }

  // SQ or LL choice among the probed servers, ties broken uniformly.
  int choose(double t) {
    int best = -1;
    double best_key = 0;
    int ties = 0;
    for (int s : probe_ids_) {
      const double key = cfg_.policy == Policy::sq ? static_cast<double>(queue_length(s, t)) : workload(s, t);
      if (best < 0 || key < best_key) {
        best = s;
        best_key = key;
        ties = 1;
      } else if (key == best_key) {
        ++ties;
        if (rng_.below(static_cast<std::uint64_t>(ties)) == 0) best = s;
      }
    }
    return best;
  }

  void remember_idle_probes(double t, int target) {
    for (int s : probe_ids_) {
      if (memory_.size() >= capacity_) break;
      if (s != target && idle(s, t) && !memory_.contains(s)) memory_.insert(s);
    }
  }

  double dispatch(double t) {
    const Scheme scheme = cfg_.scheme.scheme;
    const int d = cfg_.scheme.d;
    const bool sequential = cfg_.one_at_a_time && (scheme == Scheme::none || scheme == Scheme::bcp || scheme == Scheme::ism);

    if (scheme != Scheme::none && !memory_.empty()) {
      const int target = memory_.take_random(rng_);
      const double response = assign(target, t);
      if (scheme == Scheme::cp || scheme == Scheme::bcp) discover(t, target, d, sequential);
      return response;
    }

    // Memory empty: probe and fall back to SQ(d) / LL(d).
    if (sequential) {
      probe_ids_.clear();
      int target = -1;
      while (static_cast<int>(probe_ids_.size()) < d) {
        const int s = draw_one_more_probe();
        ++probes_;
        if (idle(s, t)) {
          target = s;
          break;
        }
      }
      if (target < 0) target = choose(t);
      const double response = assign(target, t);
      if (scheme == Scheme::bcp) discover(t, target, d - static_cast<int>(probe_ids_.size()), true, false);
      return response;
    }

    draw_probes(d);
    probes_ += d;
    const int target = choose(t);
    const double response = assign(target, t);
    if (scheme == Scheme::ip || scheme == Scheme::cp || scheme == Scheme::bcp) remember_idle_probes(t, target);
    return response;
  }

  // CP/BCP discovery probes after an assignment. Batch: `count` fresh probes.
  // Sequential: one probe at a time until memory is full or `count` are spent.
  void discover(double t, int target, int count, bool sequential, bool fresh = true) {
    if (fresh) probe_ids_.clear();
    if (!sequential) {
      draw_probes(count);
      probes_ += count;
      remember_idle_probes(t, target);
      return;
    }
    for (int i = 0; i < count && memory_.size() < capacity_; ++i) {
      const int s = draw_one_more_probe();
      ++probes_;
      if (s != target && idle(s, t) && !memory_.contains(s)) memory_.insert(s);
    }
  }

  void violation(const std::string& what, double t) {
    std::ostringstream os;
    os << "audit violation at t=" << t << ": " << what << " (scheme " << cfg_.scheme.label() << ", memory size "
       << memory_.size() << ")";
    throw ConsistencyError(os.str());
  }

  void audit(double t) {
    ++result_.audit_checks;
    if (memory_.size() > capacity_) violation("memory exceeds its capacity", t);
    if (cfg_.scheme.scheme == Scheme::ip && memory_.size() + 1 > static_cast<std::size_t>(cfg_.scheme.d))
      violation("IP memory holds more than d-1 ids", t);
    for (int s : memory_.ids())
      if (!idle(s, t)) violation("server " + std::to_string(s) + " in memory is busy", t);
  }

  const SimConfig& cfg_;
  RandomStream rng_;
  std::vector<double> busy_until_;
  std::vector<std::deque<double>> departures_;  // FCFS departure epochs per server
  IdMemory memory_;
  std::size_t capacity_;
  std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>, std::greater<>> notifications_;
  std::vector<int> probe_ids_;
  int probes_ = 0;
  double window_start_ = 0, window_end_ = 0, batch_len_ = 1;
  std::vector<double>* busy_batches_ = nullptr;
  std::vector<double>* msg_batches_ = nullptr;
  ReplicationResult result_;
};

}  // namespace detail

inline ReplicationResult run_replication(const SimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  detail::Simulator sim(cfg, seed);
  return sim.run();
}

// Runs one replication per seed (in parallel when cfg.jobs > 1) and aggregates
// in seed-list order. One replication: batch-means standard errors; more:
// standard error of the replication means.
inline SimReport replicate(const SimConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  cfg.validate();
  if (seeds.empty()) throw InvalidParameter("replicate needs at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw InvalidParameter("replicate: seeds must be distinct");

  std::vector<ReplicationResult> runs(seeds.size());
  const int workers = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(seeds.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) runs[i] = run_replication(cfg, seeds[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) runs[i] = run_replication(cfg, seeds[i]);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  SimReport rep;
  rep.replications = static_cast<int>(seeds.size());
  rep.seeds = seeds;
  const int levels = cfg.queue_tail_levels;
  auto collect = [&](auto pick_total, auto pick_batches) {
    std::vector<double> xs;
    if (runs.size() == 1) {
      xs = pick_batches(runs[0]);
      Estimate e = estimate_from(xs);
      e.mean = pick_total(runs[0]);
      return e;
    }
    for (const auto& r : runs) xs.push_back(pick_total(r));
    return estimate_from(xs);
  };
  rep.mean_response = collect([](const auto& r) { return r.mean_response; }, [](const auto& r) { return r.batch_response; });
  rep.empirical_pi0 = collect([](const auto& r) { return r.pi0; }, [](const auto& r) { return r.batch_pi0; });
  rep.probes_per_arrival = collect([](const auto& r) { return r.probes; }, [](const auto& r) { return r.batch_probes; });
  rep.messages_per_arrival = collect([](const auto& r) { return r.messages; }, [](const auto& r) { return r.batch_messages; });
  rep.busy_fraction = collect([](const auto& r) { return r.busy; }, [](const auto& r) { return r.batch_busy; });
  for (int k = 0; k < levels; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    rep.queue_tail.push_back(collect([idx](const auto& r) { return r.queue_tail[idx]; },
                                     [idx](const auto& r) {
                                       std::vector<double> xs;
                                       for (const auto& b : r.batch_queue_tail) xs.push_back(b[idx]);
                                       return xs;
                                     }));
  }
  double mem = 0;
  for (const auto& r : runs) {
    rep.jobs_measured += r.jobs;
    rep.audit_checks += r.audit_checks;
    mem += r.mean_memory;
  }
  rep.mean_memory_occupancy = mem / static_cast<double>(runs.size());
  return rep;
}

inline SimReport run_simulation(const SimConfig& cfg) {
  return replicate(cfg, derive_seeds(cfg.seed, static_cast<std::size_t>(cfg.replications)));
}

struct AuditReport {
  std::uint64_t checks = 0;
  std::uint64_t jobs = 0;
  std::size_t final_memory = 0;
  double mean_memory = 0;
  double memory_hit_fraction = 0;  // arrivals served from memory
};

// Runs one replication with per-arrival invariant checks; a violation throws
// ConsistencyError describing the event.
inline AuditReport audit_invariants(SimConfig cfg) {
  cfg.audit = true;
  const ReplicationResult r = run_replication(cfg, derive_seeds(cfg.seed, 1)[0]);
  return {r.audit_checks, r.jobs, r.final_memory, r.mean_memory, 1.0 - r.pi0};
}

}  // namespace memlb
