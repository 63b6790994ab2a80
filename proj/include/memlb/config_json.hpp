#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "memlb/errors.hpp"
#include "memlb/jobsize.hpp"
#include "memlb/memory.hpp"
#include "memlb/policy.hpp"
#include "memlb/sim.hpp"

namespace memlb {

using json = nlohmann::json;

// {"type":"exp","mean":1} | {"type":"hyperexp","mean":1,"scv":2} | {"type":"ph","alpha":[...],"A":[[...]]}
inline JobSizeDistribution dist_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "exp") return make_exponential(j.value("mean", 1.0));
  if (type == "hyperexp") return make_balanced_hyperexp(j.value("mean", 1.0), j.at("scv").get<double>());
  if (type == "ph") {
    const auto alpha = j.at("alpha").get<std::vector<double>>();
    const auto rows = j.at("A").get<std::vector<std::vector<double>>>();
    const auto n = static_cast<Eigen::Index>(alpha.size());
    if (static_cast<Eigen::Index>(rows.size()) != n) throw InvalidParameter("PH generator must be n x n");
    Eigen::RowVectorXd a(n);
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a(i) = alpha[static_cast<std::size_t>(i)];
      if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n) throw InvalidParameter("PH generator must be n x n");
      for (Eigen::Index k = 0; k < n; ++k) A(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    return make_phase_type_distribution(a, A);
  }
  throw InvalidParameter("unknown job-size type '" + type + "'");
}

inline json dist_to_json(const JobSizeDistribution& dist) {
  if (dist.family() == "exp") return {{"type", "exp"}, {"mean", dist.mean()}};
  if (dist.family() == "hyperexp") return {{"type", "hyperexp"}, {"mean", dist.mean()}, {"scv", dist.scv()}};
  const PhaseType ph = dist.as_phase_type();
  json rows = json::array();
  for (Eigen::Index i = 0; i < ph.generator.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < ph.generator.cols(); ++k) row.push_back(ph.generator(i, k));
    rows.push_back(row);
  }
  return {{"type", "ph"}, {"alpha", std::vector<double>(ph.alpha.data(), ph.alpha.data() + ph.alpha.size())}, {"A", rows}};
}

// Short command-line form: "exp", "exp:MEAN", "hyperexp:SCV" (mean 1), "hyperexp:SCV:MEAN".
inline JobSizeDistribution parse_dist(std::string_view text) {
  std::vector<std::string> parts;
  std::stringstream ss{std::string(text)};
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.empty()) throw InvalidParameter("empty job-size description");
  try {
    if (parts[0] == "exp" && parts.size() <= 2) return make_exponential(parts.size() == 2 ? std::stod(parts[1]) : 1.0);
    if (parts[0] == "hyperexp" && (parts.size() == 2 || parts.size() == 3))
      return make_balanced_hyperexp(parts.size() == 3 ? std::stod(parts[2]) : 1.0, std::stod(parts[1]));
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const InvalidParameter*>(&e)) throw;
    throw InvalidParameter("malformed number in job-size description '" + std::string(text) + "'");
  }
  throw InvalidParameter("unknown job-size description '" + std::string(text) + "' (use exp[:mean] or hyperexp:scv[:mean])");
}

// {"scheme":"ism","d":5,"A":4}
inline MemorySchemeSpec scheme_from_json(const json& j) {
  MemorySchemeSpec s;
  s.scheme = parse_scheme(j.at("scheme").get<std::string>());
  s.d = j.value("d", 1);
  if (j.contains("A")) s.capacity = j.at("A").get<int>();
  s.validate();
  return s;
}

inline json scheme_to_json(const MemorySchemeSpec& s) {
  json j{{"scheme", to_string(s.scheme)}, {"d", s.d}};
  if (s.capacity) j["A"] = *s.capacity;
  return j;
}

// "sq:2:ip", "ll:3:bcp:5", "sq:5:ism:4"
inline std::pair<Policy, MemorySchemeSpec> parse_policy_spec(std::string_view text) {
  std::vector<std::string> parts;
  std::stringstream ss{std::string(text)};
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() < 3 || parts.size() > 4)
    throw InvalidParameter("expected policy:d:scheme[:A], got '" + std::string(text) + "'");
  MemorySchemeSpec s;
  s.scheme = parse_scheme(parts[2]);
  try {
    s.d = std::stoi(parts[1]);
    if (parts.size() == 4) s.capacity = std::stoi(parts[3]);
  } catch (const std::logic_error&) {
    throw InvalidParameter("malformed integer in '" + std::string(text) + "'");
  }
  s.validate();
  return {parse_policy(parts[0]), s};
}

inline SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  c.N = j.at("N").get<int>();
  c.lambda = j.at("lambda").get<double>();
  c.policy = parse_policy(j.value("policy", std::string("sq")));
  c.scheme = j.contains("scheme") ? scheme_from_json(j.at("scheme")) : MemorySchemeSpec{};
  if (j.contains("d")) c.scheme.d = j.at("d").get<int>();
  if (j.contains("dist")) c.dist = dist_from_json(j.at("dist"));
  c.sim_time = j.value("sim_time", 0.0);
  c.warmup_fraction = j.value("warmup_fraction", 1.0 / 3.0);
  c.seed = j.value("seed", std::uint64_t{1});
  c.replications = j.value("replications", 1);
  c.one_at_a_time = j.value("one_at_a_time", false);
  c.probe_with_replacement = j.value("probe_with_replacement", true);
  c.batches = j.value("batches", 20);
  c.queue_tail_levels = j.value("queue_tail_levels", 0);
  c.validate();
  return c;
}

inline json sim_config_to_json(const SimConfig& c) {
  return {{"N", c.N},
          {"lambda", c.lambda},
          {"policy", to_string(c.policy)},
          {"scheme", scheme_to_json(c.scheme)},
          {"dist", dist_to_json(c.dist)},
          {"sim_time", c.horizon()},
          {"warmup_fraction", c.warmup_fraction},
          {"seed", c.seed},
          {"replications", c.replications},
          {"one_at_a_time", c.one_at_a_time},
          {"probe_with_replacement", c.probe_with_replacement},
          {"batches", c.batches},
          {"queue_tail_levels", c.queue_tail_levels}};
}

inline json estimate_to_json(const Estimate& e) { return {{"mean", e.mean}, {"stderr", e.stderr_}}; }

inline json report_to_json(const SimReport& r) {
  json j{{"mean_response", estimate_to_json(r.mean_response)},
         {"empirical_pi0", estimate_to_json(r.empirical_pi0)},
         {"probes_per_arrival", estimate_to_json(r.probes_per_arrival)},
         {"messages_per_arrival", estimate_to_json(r.messages_per_arrival)},
         {"busy_fraction", estimate_to_json(r.busy_fraction)},
         {"jobs_measured", r.jobs_measured},
         {"replications", r.replications},
         {"seeds", r.seeds},
         {"mean_memory_occupancy", r.mean_memory_occupancy}};
  if (!r.queue_tail.empty()) {
    json tail = json::array();
    for (const auto& e : r.queue_tail) tail.push_back(estimate_to_json(e));
    j["queue_tail"] = tail;
  }
  return j;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kSimCsvHeader =
    "setup,N,policy,d,scheme,A,lambda,dist,scv,mean_response,stderr,pi0_emp,probes_per_arrival,"
    "messages_per_arrival,jobs_measured,seed_list";

inline std::string fmt_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline std::string sim_csv_row(const std::string& setup, const SimConfig& c, const SimReport& r) {
  std::ostringstream os;
  os << setup << ',' << c.N << ',' << to_string(c.policy) << ',' << c.scheme.d << ',' << to_string(c.scheme.scheme) << ','
     << (c.scheme.capacity ? std::to_string(*c.scheme.capacity) : std::string()) << ',' << fmt_number(c.lambda) << ','
     << c.dist.family() << ',' << fmt_number(c.dist.scv()) << ',' << fmt_number(r.mean_response.mean) << ','
     << fmt_number(r.mean_response.stderr_) << ',' << fmt_number(r.empirical_pi0.mean) << ','
     << fmt_number(r.probes_per_arrival.mean) << ',' << fmt_number(r.messages_per_arrival.mean) << ',' << r.jobs_measured
     << ',';
  for (std::size_t i = 0; i < r.seeds.size(); ++i) os << (i ? ";" : "") << r.seeds[i];
  return os.str();
}

}  // namespace memlb
