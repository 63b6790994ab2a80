// memlb: command-line front end for the memory-aware SQ(d)/LL(d) toolkit.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "memlb/memlb.hpp"

namespace {

using memlb::json;

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "json";
  int jobs = 1;
};

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> xs;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) {
    try {
      xs.push_back(std::stod(p));
    } catch (const std::logic_error&) {
      throw memlb::InvalidParameter("malformed number '" + p + "' in list '" + text + "'");
    }
  }
  return xs;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> xs;
  for (double x : parse_doubles(text)) xs.push_back(static_cast<int>(x));
  return xs;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> xs;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) {
    try {
      xs.push_back(std::stoull(p));
    } catch (const std::logic_error&) {
      throw memlb::InvalidParameter("malformed seed '" + p + "'");
    }
  }
  return xs;
}

void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(g.out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + g.out);
  f << text;
}

memlb::MemorySchemeSpec make_scheme(const std::string& name, int d, std::optional<int> A) {
  memlb::MemorySchemeSpec s{memlb::parse_scheme(name), d, A};
  s.validate();
  return s;
}

struct PointArgs {
  std::string policy = "sq";
  int d = 2;
  std::string scheme = "none";
  std::optional<int> A;
  double lambda = 0.5;
  std::string dist = "exp";
};

void add_point_options(CLI::App* cmd, PointArgs& a, bool with_lambda = true) {
  cmd->add_option("--policy", a.policy, "sq or ll")->check(CLI::IsMember({"sq", "ll"}));
  cmd->add_option("--d", a.d, "probes per arrival");
  cmd->add_option("--scheme", a.scheme, "none, ip, cp, bcp or ism");
  cmd->add_option("--A", a.A, "memory capacity (bcp, ism)");
  if (with_lambda) cmd->add_option("--lambda", a.lambda, "arrival rate per server");
  cmd->add_option("--dist", a.dist, "exp[:mean] or hyperexp:scv[:mean]");
}

int cmd_pi0(const Globals& g, const PointArgs& a, double rho) {
  const auto spec = make_scheme(a.scheme, a.d, a.A);
  const auto ms = memlb::pi0(spec, rho);
  if (g.format == "csv") {
    std::string s = "scheme,d,A,rho,pi0\n" + to_string(spec.scheme) + "," + std::to_string(spec.d) + "," +
                    (spec.capacity ? std::to_string(*spec.capacity) : "") + "," + memlb::fmt_number(rho) + "," +
                    memlb::fmt_number(ms.pi0) + "\n";
    emit(g, s);
    return 0;
  }
  json j{{"scheme", memlb::scheme_to_json(spec)}, {"rho", rho}, {"pi0", ms.pi0}};
  if (ms.pi) j["pi"] = *ms.pi;
  if (!ms.regime_note.empty()) j["regime_note"] = ms.regime_note;
  emit(g, j.dump(2) + "\n");
  return 0;
}

int cmd_analyze(const Globals& g, const PointArgs& a, const std::string& ccdf_grid) {
  const auto spec = make_scheme(a.scheme, a.d, a.A);
  const auto policy = memlb::parse_policy(a.policy);
  const auto dist = memlb::parse_dist(a.dist);
  const auto point = memlb::cavity_point(policy, spec, a.lambda, dist);

  json j{{"policy", a.policy}, {"scheme", memlb::scheme_to_json(spec)}, {"lambda", a.lambda}, {"dist", memlb::dist_to_json(dist)},
         {"pi0", point.pi0}, {"lambda_eff", point.lambda_eff}, {"mean_response", point.mean_response}};
  if (!point.regime_note.empty()) j["regime_note"] = point.regime_note;
  if (spec.d >= 2 && dist.is_exponential()) j["heavy_traffic_limit"] = memlb::heavy_traffic_limit(policy, spec).value;

  std::vector<double> ws;
  if (!ccdf_grid.empty()) {
    const auto p = parse_doubles(ccdf_grid);
    if (p.size() != 2 || !(p[0] > 0) || !(p[1] > 0)) throw memlb::InvalidParameter("--ccdf-grid expects STEP,MAX");
    for (double w = 0; w <= p[1] * (1 + 1e-12); w += p[0]) ws.push_back(w);
  }
  json ccdf = json::array();
  if (policy == memlb::Policy::sq) {
    if (dist.is_exponential()) {
      const double mu = 1.0 / dist.mean();
      j["u"] = memlb::sq_queue_tail(spec.d, a.lambda, mu, point.pi0).u;
      for (double w : ws) ccdf.push_back({w, memlb::sq_response_ccdf(spec.d, a.lambda, mu, point.pi0, w)});
    } else {
      const auto ph = dist.as_phase_type();
      const auto sol = memlb::sq_ph_equilibrium(spec.d, a.lambda, ph, point.pi0);
      j["u"] = sol.u;
      for (double w : ws) ccdf.push_back({w, memlb::sq_ph_response_ccdf(sol, ph, w)});
    }
  } else {
    memlb::LlGridOptions opt;
    if (!ws.empty()) opt.initial_W = std::max(ws.back(), 16.0 * dist.mean());
    const auto sol = memlb::ll_fixed_point(spec.d, a.lambda, dist, point.pi0, opt);
    j["mean_workload"] = memlb::ll_mean_workload(sol);
    for (double w : ws) ccdf.push_back({w, memlb::ll_response_ccdf(sol, w)});
  }
  if (!ws.empty()) j["ccdf_grid"] = ccdf;

  if (g.format == "csv") {
    std::string s = "policy,d,scheme,A,lambda,dist,pi0,mean_response\n" + a.policy + "," + std::to_string(spec.d) + "," +
                    to_string(spec.scheme) + "," + (spec.capacity ? std::to_string(*spec.capacity) : "") + "," +
                    memlb::fmt_number(a.lambda) + "," + a.dist + "," + memlb::fmt_number(point.pi0) + "," +
                    memlb::fmt_number(point.mean_response) + "\n";
    emit(g, s);
  } else {
    emit(g, j.dump(2) + "\n");
  }
  return 0;
}

std::string figure1_csv(int d, int A, const std::vector<double>& lambdas) {
  std::string s = "scheme,lambda,mean_response,pi0,probes_per_arrival\n";
  for (const auto& r : memlb::figure1_rows(d, A, lambdas))
    s += r.scheme + "," + memlb::fmt_number(r.lambda) + "," + memlb::fmt_number(r.mean_response) + "," + memlb::fmt_number(r.pi0) +
         "," + memlb::fmt_number(r.probes_per_arrival) + "\n";
  return s;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> xs;
  for (int i = 1; i <= 19; ++i) xs.push_back(0.05 * i);
  return xs;
}

int cmd_simulate(const Globals& g, const std::string& config_path, const std::string& seeds_text, bool audit,
                 const std::string& csv_path) {
  std::ifstream f(config_path);
  if (!f) throw memlb::InvalidParameter("cannot read config file '" + config_path + "'");
  json cfg_json;
  try {
    cfg_json = json::parse(f);
  } catch (const json::exception& e) {
    throw memlb::InvalidParameter(std::string("malformed config JSON: ") + e.what());
  }
  memlb::SimConfig cfg = memlb::sim_config_from_json(cfg_json);
  if (!cfg_json.contains("seed")) cfg.seed = g.seed;
  cfg.jobs = g.jobs;

  if (audit) {
    const auto r = memlb::audit_invariants(cfg);
    emit(g, json{{"audit", "ok"}, {"checks", r.checks}, {"jobs", r.jobs}, {"final_memory", r.final_memory},
                 {"mean_memory", r.mean_memory}, {"memory_hit_fraction", r.memory_hit_fraction}}
                .dump(2) +
                "\n");
    return 0;
  }

  const auto seeds = seeds_text.empty() ? memlb::derive_seeds(cfg.seed, static_cast<std::size_t>(cfg.replications)) : parse_seeds(seeds_text);
  const memlb::SimReport rep = memlb::replicate(cfg, seeds);
  if (!csv_path.empty()) {
    std::ifstream probe(csv_path);
    const bool fresh = !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
    std::ofstream csv(csv_path, std::ios::app | std::ios::binary);
    if (fresh) csv << memlb::kSimCsvHeader << "\n";
    csv << memlb::sim_csv_row(cfg_json.value("setup", std::string("custom")), cfg, rep) << "\n";
  }
  if (g.format == "csv") {
    emit(g, std::string(memlb::kSimCsvHeader) + "\n" + memlb::sim_csv_row("custom", cfg, rep) + "\n");
  } else {
    emit(g, json{{"config", memlb::sim_config_to_json(cfg)}, {"report", memlb::report_to_json(rep)}}.dump(2) + "\n");
  }
  return 0;
}

int cmd_heavy(const Globals& g, const PointArgs& a, const std::string& lambdas_text) {
  const auto spec = make_scheme(a.scheme, a.d, a.A);
  const auto policy = memlb::parse_policy(a.policy);
  const auto limit = memlb::heavy_traffic_limit(policy, spec);
  const auto lambdas = lambdas_text.empty() ? std::vector<double>{0.99, 0.999, 0.9999} : parse_doubles(lambdas_text);
  const auto ratios = memlb::heavy_traffic_corroborate(policy, spec, lambdas);
  json seq = json::array();
  for (std::size_t i = 0; i < lambdas.size(); ++i) seq.push_back({{"lambda", lambdas[i]}, {"ratio", ratios[i]}});
  emit(g, json{{"regime", limit.regime}, {"limit", limit.value}, {"corroboration", seq}}.dump(2) + "\n");
  return 0;
}

int cmd_lowratio(const Globals& g, const std::string& p1, const std::string& p2) {
  const auto [pol1, s1] = memlb::parse_policy_spec(p1);
  const auto [pol2, s2] = memlb::parse_policy_spec(p2);
  const auto r = memlb::low_traffic_ratio(pol1, s1, pol2, s2);
  json value = std::isinf(r.value) ? json("inf") : json(r.value);
  emit(g, json{{"regime", r.regime}, {"ratio", value}, {"inferred", r.inferred}}.dump(2) + "\n");
  return 0;
}

int cmd_reproduce(const Globals& g, const std::string& target, const std::string& n_text, int replications, double budget,
                  int d, int A, const std::string& lambdas_text) {
  if (target == "figure1") {
    emit(g, figure1_csv(d, A, lambdas_text.empty() ? default_lambda_grid() : parse_doubles(lambdas_text)));
    return 0;
  }
  if (target != "table1") throw memlb::InvalidParameter("reproduce target must be table1 or figure1");

  const std::vector<int> Ns = n_text.empty() ? memlb::table1_server_counts() : parse_ints(n_text);
  const auto setups = memlb::table1_setups();
  double events = 0;
  for (const auto& s : setups)
    for (int N : Ns) events += s.lambda * N * s.sim_config(N).horizon() * replications;
  if (events > budget)
    std::fprintf(stderr, "warning: about %.3g simulated arrivals requested (budget %.3g); this will take a while\n", events, budget);

  std::string out = std::string(memlb::kSimCsvHeader) + "\n";
  for (std::size_t i = 0; i < setups.size(); ++i) {
    const auto& s = setups[i];
    for (std::size_t k = 0; k < Ns.size(); ++k) {
      memlb::SimConfig cfg = s.sim_config(Ns[k]);
      cfg.replications = replications;
      cfg.jobs = g.jobs;
      cfg.seed = memlb::splitmix64(g.seed ^ (static_cast<std::uint64_t>(s.id) << 32 | static_cast<std::uint64_t>(Ns[k])));
      out += memlb::sim_csv_row(std::to_string(s.id), cfg, memlb::run_simulation(cfg)) + "\n";
    }
    // Cavity column: N is written as "cavity", statistics columns left empty.
    const memlb::SimConfig cfg = s.sim_config(1);
    out += std::to_string(s.id) + ",cavity," + to_string(s.policy) + "," + std::to_string(s.scheme.d) + "," +
           to_string(s.scheme.scheme) + "," + (s.scheme.capacity ? std::to_string(*s.scheme.capacity) : "") + "," +
           memlb::fmt_number(s.lambda) + "," + cfg.dist.family() + "," + memlb::fmt_number(cfg.dist.scv()) + "," +
           memlb::fmt_number(memlb::table1_cavity(s)) + ",,,,,,\n";
  }
  emit(g, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memlb: cavity-method analysis and simulation of SQ(d)/LL(d) load balancing with dispatcher memory"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "root random seed")->default_val(1);
  app.add_option("--out", g.out, "write output to this file instead of stdout");
  app.add_option("--format", g.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--jobs", g.jobs, "parallel replications")->check(CLI::PositiveNumber);
  app.fallthrough();

  PointArgs pa;
  double rho = 0.5;
  auto* pi0_cmd = app.add_subcommand("pi0", "probability that the memory is empty at an arrival");
  pi0_cmd->add_option("--scheme", pa.scheme)->required();
  pi0_cmd->add_option("--d", pa.d);
  pi0_cmd->add_option("--A", pa.A);
  pi0_cmd->add_option("--rho", rho)->required();

  std::string ccdf_grid;
  auto* analyze = app.add_subcommand("analyze", "cavity-method mean response and distributions")->alias("cavity");
  add_point_options(analyze, pa);
  analyze->add_option("--ccdf-grid", ccdf_grid, "STEP,MAX: also emit the response-time ccdf on this grid");

  int sweep_d = 5, sweep_A = 4;
  std::string lambdas_text;
  auto* sweep = app.add_subcommand("sweep", "SQ(d) scheme comparison over a load grid (CSV)");
  sweep->add_option("--d", sweep_d);
  sweep->add_option("--A", sweep_A);
  sweep->add_option("--lambdas", lambdas_text, "comma-separated loads");

  std::string config_path, seeds_text, csv_path;
  bool audit = false;
  auto* simulate = app.add_subcommand("simulate", "finite-N discrete-event simulation");
  simulate->add_option("--config", config_path, "JSON simulation config")->required();
  simulate->add_option("--seeds", seeds_text, "explicit comma-separated replication seeds");
  simulate->add_flag("--audit", audit, "check dispatcher invariants at every arrival");
  simulate->add_option("--csv", csv_path, "append a result row to this CSV file");

  auto* heavy = app.add_subcommand("heavy", "heavy-traffic limit and its numerical corroboration");
  add_point_options(heavy, pa, false);
  heavy->add_option("--lambdas", lambdas_text, "loads for the corroboration sequence");

  std::string p1, p2;
  auto* lowratio = app.add_subcommand("lowratio", "low-traffic waiting-time ratio");
  lowratio->add_option("--p1", p1, "policy:d:scheme[:A]")->required();
  lowratio->add_option("--p2", p2, "policy:d:scheme[:A]")->required();

  std::string target, n_text;
  int replications = 10;
  double budget = 5e9;
  auto* reproduce = app.add_subcommand("reproduce", "regenerate the finite-N table or the SQ(5) figure data");
  reproduce->add_option("target", target, "table1 or figure1")->required()->check(CLI::IsMember({"table1", "figure1"}));
  reproduce->add_option("--N", n_text, "comma-separated server counts");
  reproduce->add_option("--replications", replications)->check(CLI::PositiveNumber);
  reproduce->add_option("--budget", budget, "warn when simulated arrivals exceed this");
  reproduce->add_option("--d", sweep_d);
  reproduce->add_option("--A", sweep_A);
  reproduce->add_option("--lambdas", lambdas_text);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*pi0_cmd) return cmd_pi0(g, pa, rho);
    if (*analyze) return cmd_analyze(g, pa, ccdf_grid);
    if (*sweep) {
      emit(g, figure1_csv(sweep_d, sweep_A, lambdas_text.empty() ? default_lambda_grid() : parse_doubles(lambdas_text)));
      return 0;
    }
    if (*simulate) return cmd_simulate(g, config_path, seeds_text, audit, csv_path);
    if (*heavy) return cmd_heavy(g, pa, lambdas_text);
    if (*lowratio) return cmd_lowratio(g, p1, p2);
    if (*reproduce) return cmd_reproduce(g, target, n_text, replications, budget, sweep_d, sweep_A, lambdas_text);
  } catch (const memlb::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << " (residual " << e.residual() << ")\n";
    return 3;
  } catch (const memlb::ConsistencyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
