#pragma once

#include <string>
#include <vector>

#include "memlb/cavity_ll.hpp"
#include "memlb/cavity_sq.hpp"
#include "memlb/jobsize.hpp"
#include "memlb/memory.hpp"
#include "memlb/policy.hpp"
#include "memlb/sim.hpp"

namespace memlb {

struct CavityPoint {
  double pi0 = 1;
  double lambda_eff = 0;
  double mean_response = 0;
  std::string regime_note;
};

// Mean response of the cavity queue. Exponential jobs use the closed forms;
// other job sizes are solved as the memoryless system at rate lambda pi0^{1/d}
// (LL on the workload grid, SQ through the phase-type ODEs).
inline CavityPoint cavity_point(Policy policy, const MemorySchemeSpec& scheme, double lambda,
                                const JobSizeDistribution& dist) {
  const double rho = lambda * dist.mean();
  const MemoryStationary ms = pi0(scheme, rho);
  CavityPoint out;
  out.pi0 = ms.pi0;
  out.regime_note = ms.regime_note;
  const int d = scheme.d;
  out.lambda_eff = lambda * std::pow(ms.pi0, 1.0 / d);
  if (dist.is_exponential()) {
    const double mu = 1.0 / dist.mean();
    out.mean_response = policy == Policy::sq ? sq_mean_response(d, lambda, mu, ms.pi0) : ll_mean_response_exp(d, lambda, mu, ms.pi0);
    return out;
  }
  if (ms.pi0 == 0) {
    out.mean_response = dist.mean();
    return out;
  }
  if (policy == Policy::ll) {
    out.mean_response = ll_mean_response(ll_fixed_point(d, out.lambda_eff, dist, 1.0));
  } else {
    out.mean_response = sq_mean_response_from_tail(sq_ph_equilibrium(d, out.lambda_eff, dist.as_phase_type(), 1.0));
  }
  return out;
}

// The eight finite-N validation setups: LL(d) for 1-4, SQ(d) for 5-8.
struct Table1Setup {
  int id = 1;
  Policy policy = Policy::ll;
  double lambda = 0.9;
  MemorySchemeSpec scheme;
  double scv = 1;  // 1 means exponential, otherwise balanced hyperexponential

  JobSizeDistribution dist() const { return scv == 1 ? make_exponential(1.0) : make_balanced_hyperexp(1.0, scv); }

  SimConfig sim_config(int N) const {
    SimConfig c;
    c.N = N;
    c.lambda = lambda;
    c.policy = policy;
    c.scheme = scheme;
    c.dist = dist();
    return c;
  }

  std::string label() const {
    return to_string(policy) + "(" + std::to_string(scheme.d) + ") " + scheme.label() + " lambda=" + std::to_string(lambda).substr(0, 4) +
           (scv == 1 ? " exp" : " hyperexp scv=" + std::to_string(static_cast<int>(scv)));
  }
};

inline std::vector<Table1Setup> table1_setups() {
  std::vector<Table1Setup> out;
  const Table1Setup base[4] = {
      {1, Policy::ll, 0.9, {Scheme::ip, 4, {}}, 1},
      {2, Policy::ll, 0.8, {Scheme::cp, 3, {}}, 1},
      {3, Policy::ll, 0.8, {Scheme::bcp, 3, 5}, 2},
      {4, Policy::ll, 0.85, {Scheme::ism, 2, 10}, 3},
  };
  for (const auto& s : base) out.push_back(s);
  for (auto s : base) {
    s.id += 4;
    s.policy = Policy::sq;
    out.push_back(s);
  }
  return out;
}

inline const std::vector<int>& table1_server_counts() {
  static const std::vector<int> n{10, 20, 50, 100, 200, 500, 1000, 3000};
  return n;
}

inline double table1_cavity(const Table1Setup& s) { return cavity_point(s.policy, s.scheme, s.lambda, s.dist()).mean_response; }

// Figure 1 data: SQ(d) with exponential jobs, memory size A for BCP and ISM.
// Probes follow the figure's accounting: none, BCP and ISM probe one at a
// time; ISM also counts idle notifications.
struct Figure1Row {
  std::string scheme;
  double lambda = 0;
  double mean_response = 0;
  double pi0 = 1;
  double probes_per_arrival = 0;
};

inline std::vector<MemorySchemeSpec> figure1_schemes(int d, int A) {
  return {{Scheme::none, d, {}}, {Scheme::ip, d, {}}, {Scheme::cp, d, {}}, {Scheme::bcp, d, A}, {Scheme::ism, d, A}};
}

inline std::vector<Figure1Row> figure1_rows(int d, int A, const std::vector<double>& lambdas) {
  std::vector<Figure1Row> rows;
  const JobSizeDistribution exp1 = make_exponential(1.0);
  for (const auto& scheme : figure1_schemes(d, A)) {
    for (double l : lambdas) {
      const CavityPoint p = cavity_point(Policy::sq, scheme, l, exp1);
      double probes = 0;
      switch (scheme.scheme) {
        case Scheme::none:
        case Scheme::bcp: probes = probes_per_arrival(scheme, l, true); break;
        case Scheme::ip:
        case Scheme::cp: probes = probes_per_arrival(scheme, l, false); break;
        case Scheme::ism: probes = ism_messages_per_arrival(scheme, l); break;
      }
      rows.push_back({scheme.label(), l, p.mean_response, p.pi0, probes});
    }
  }
  return rows;
}

}  // namespace memlb
