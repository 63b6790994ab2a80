#include <gtest/gtest.h>

#include <cmath>

#include "memlb/config_json.hpp"
#include "memlb/sim.hpp"

using namespace memlb;

namespace {

SimConfig single_server(double lambda, JobSizeDistribution dist) {
  SimConfig c;
  c.N = 1;
  c.lambda = lambda;
  c.dist = std::move(dist);
  c.scheme = {Scheme::none, 1, {}};
  c.sim_time = 4e5;
  c.queue_tail_levels = 4;
  return c;
}

}  // namespace

TEST(Sim, MM1MeanResponse) {
  const auto rep = run_simulation(single_server(0.5, make_exponential(1.0)));
  EXPECT_NEAR(rep.mean_response.mean, 2.0, 3 * rep.mean_response.stderr_);
  EXPECT_LT(rep.mean_response.stderr_, 0.05);
  EXPECT_NEAR(rep.busy_fraction.mean, 0.5, 3 * rep.busy_fraction.stderr_ + 1e-3);
  ASSERT_EQ(rep.queue_tail.size(), 4u);
  for (int k = 1; k <= 4; ++k) {
    const auto& e = rep.queue_tail[static_cast<std::size_t>(k - 1)];
    EXPECT_NEAR(e.mean, std::pow(0.5, k), 3 * e.stderr_ + 1e-3) << k;
  }
}

TEST(Sim, MG1PollaczekKhinchine) {
  // E[R] = 1 + lambda E[G^2] / (2 (1 - rho)), E[G^2] = (1 + scv) = 4
  const auto rep = run_simulation(single_server(0.5, make_balanced_hyperexp(1.0, 3.0)));
  EXPECT_NEAR(rep.mean_response.mean, 3.0, 3 * rep.mean_response.stderr_);
}

TEST(Sim, DeterministicForSeed) {
  SimConfig c;
  c.N = 50;
  c.lambda = 0.8;
  c.scheme = {Scheme::bcp, 3, 5};
  c.dist = make_balanced_hyperexp(1.0, 2.0);
  c.sim_time = 300;
  c.replications = 3;
  c.seed = 99;
  const auto a = report_to_json(run_simulation(c)).dump();
  c.jobs = 2;
  const auto b = report_to_json(run_simulation(c)).dump();
  EXPECT_EQ(a, b);
  c.seed = 100;
  EXPECT_NE(a, report_to_json(run_simulation(c)).dump());
}

TEST(Sim, ReplicationsAreSeedOrdered) {
  SimConfig c;
  c.N = 20;
  c.lambda = 0.6;
  c.scheme = {Scheme::ip, 2, {}};
  c.sim_time = 200;
  const auto r1 = run_replication(c, 5), r2 = run_replication(c, 6);
  const auto rep = replicate(c, {5, 6});
  EXPECT_DOUBLE_EQ(rep.mean_response.mean, 0.5 * (r1.mean_response + r2.mean_response));
  EXPECT_EQ(rep.jobs_measured, r1.jobs + r2.jobs);
  EXPECT_THROW(replicate(c, {5, 5}), InvalidParameter);
  EXPECT_THROW(replicate(c, {}), InvalidParameter);
}

TEST(Sim, AuditAllSchemes) {
  for (Policy p : {Policy::sq, Policy::ll})
    for (const MemorySchemeSpec& s : {MemorySchemeSpec{Scheme::none, 2, {}}, MemorySchemeSpec{Scheme::ip, 3, {}},
                                      MemorySchemeSpec{Scheme::cp, 2, {}}, MemorySchemeSpec{Scheme::bcp, 3, 4},
                                      MemorySchemeSpec{Scheme::ism, 2, 3}})
      for (bool one : {false, true}) {
        SimConfig c;
        c.N = 30;
        c.lambda = 0.85;
        c.policy = p;
        c.scheme = s;
        c.dist = make_balanced_hyperexp(1.0, 3.0);
        c.sim_time = 200;
        c.one_at_a_time = one;
        AuditReport r;
        ASSERT_NO_THROW(r = audit_invariants(c)) << to_string(p) << " " << s.label();
        EXPECT_GT(r.checks, r.jobs);
        if (s.capacity) {
          EXPECT_LE(r.final_memory, static_cast<std::size_t>(*s.capacity));
        }
        if (s.scheme == Scheme::ip) {
          EXPECT_LE(r.final_memory, 2u);
        }
        if (s.scheme == Scheme::none) {
          EXPECT_EQ(r.memory_hit_fraction, 0.0);
        }
      }
}

TEST(Sim, EmpiricalPi0NearCavity) {
  SimConfig c;
  c.N = 500;
  c.lambda = 0.7;
  c.scheme = {Scheme::ip, 3, {}};
  c.sim_time = 400;
  const auto rep = run_simulation(c);
  EXPECT_NEAR(rep.empirical_pi0.mean, pi0(c.scheme, 0.7).pi0, 0.02);
  EXPECT_NEAR(rep.probes_per_arrival.mean, 3 * rep.empirical_pi0.mean, 1e-12);
}

TEST(Sim, IsmMessagesAreNotificationsOnly) {
  // one notification per busy period, i.e. per job that lands on an idle server
  SimConfig c;
  c.N = 500;
  c.lambda = 0.7;
  c.scheme = {Scheme::ism, 3, 2};
  c.one_at_a_time = true;
  c.sim_time = 400;
  const auto rep = run_simulation(c);
  const double p0 = pi0(c.scheme, 0.7).pi0;
  EXPECT_NEAR(rep.messages_per_arrival.mean, 1 - p0 * std::pow(0.7, 3), 0.01);
  EXPECT_NEAR(rep.probes_per_arrival.mean, p0 * (1 - std::pow(0.7, 3)) / 0.3, 0.02);
}

TEST(Sim, Validation) {
  SimConfig c;
  c.lambda = 1.0;
  EXPECT_THROW(c.validate(), InstabilityError);
  c.lambda = 0.5;
  c.N = 2;
  c.scheme = {Scheme::none, 3, {}};
  c.probe_with_replacement = false;
  EXPECT_THROW(c.validate(), InvalidParameter);
  c.probe_with_replacement = true;
  EXPECT_NO_THROW(c.validate());
  c.scheme = {Scheme::ism, 2, {}};
  EXPECT_THROW(c.validate(), MissingParameter);
}

TEST(Config, JsonRoundTrip) {
  const json j = json::parse(R"({"N": 40, "lambda": 0.8, "policy": "ll", "scheme": {"scheme": "bcp", "d": 3, "A": 5},
                                 "dist": {"type": "hyperexp", "mean": 1, "scv": 2}, "sim_time": 50, "seed": 7, "replications": 2})");
  const SimConfig c = sim_config_from_json(j);
  EXPECT_EQ(c.N, 40);
  EXPECT_EQ(c.policy, Policy::ll);
  EXPECT_EQ(c.scheme.scheme, Scheme::bcp);
  EXPECT_EQ(*c.scheme.capacity, 5);
  EXPECT_NEAR(c.dist.scv(), 2.0, 1e-12);
  const SimConfig back = sim_config_from_json(sim_config_to_json(c));
  EXPECT_EQ(sim_config_to_json(back).dump(), sim_config_to_json(c).dump());
  EXPECT_THROW(sim_config_from_json(json::parse(R"({"N": 4, "lambda": 0.5, "scheme": {"scheme": "ism", "d": 2}})")),
               MissingParameter);
}

TEST(Config, ShortForms) {
  EXPECT_TRUE(parse_dist("exp").is_exponential());
  EXPECT_NEAR(parse_dist("exp:2").mean(), 2.0, 1e-15);
  EXPECT_NEAR(parse_dist("hyperexp:3").scv(), 3.0, 1e-12);
  EXPECT_THROW(parse_dist("pareto:2"), InvalidParameter);
  EXPECT_THROW(parse_dist("exp:x"), InvalidParameter);
  const auto [p, s] = parse_policy_spec("ll:3:bcp:5");
  EXPECT_EQ(p, Policy::ll);
  EXPECT_EQ(s.d, 3);
  EXPECT_EQ(*s.capacity, 5);
  EXPECT_THROW(parse_policy_spec("sq:2:ism"), MissingParameter);
  EXPECT_THROW(parse_policy_spec("sq:two:ip"), InvalidParameter);
}

TEST(Config, CsvRowShape) {
  SimConfig c;
  c.N = 10;
  c.sim_time = 50;
  c.replications = 2;
  const auto rep = run_simulation(c);
  const std::string row = sim_csv_row("x", c, rep);
  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(count(row), count(kSimCsvHeader));
  EXPECT_NE(row.find(';'), std::string::npos);
}
