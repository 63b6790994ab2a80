#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memlb/errors.hpp"
#include "memlb/markov.hpp"

namespace memlb {

// How the dispatcher learns about idle servers.
//   none: no memory, always probe d servers
//   ip:   interrupted probing, probe only when memory is empty, keep the extra idle ids
//   cp:   continuous probing, probe d servers on every arrival, unbounded memory
//   bcp:  continuous probing with capacity A
//   ism:  idle servers message the dispatcher, capacity A
enum class Scheme { none, ip, cp, bcp, ism };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::none: return "none";
    case Scheme::ip: return "ip";
    case Scheme::cp: return "cp";
    case Scheme::bcp: return "bcp";
    case Scheme::ism: return "ism";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  if (name == "none") return Scheme::none;
  if (name == "ip") return Scheme::ip;
  if (name == "cp") return Scheme::cp;
  if (name == "bcp") return Scheme::bcp;
  if (name == "ism") return Scheme::ism;
  throw InvalidParameter("unknown memory scheme '" + std::string(name) + "'");
}

struct MemorySchemeSpec {
  Scheme scheme = Scheme::none;
  int d = 1;
  std::optional<int> capacity;  // A; required for bcp and ism

  bool needs_capacity() const { return scheme == Scheme::bcp || scheme == Scheme::ism; }

  int capacity_or_throw() const {
    if (!capacity) {
      throw MissingParameter(scheme == Scheme::ism ? "ISM requires --A" : "BCP requires --A");
    }
    return *capacity;
  }

  void validate() const {
    if (d < 1) throw InvalidParameter("probe count d must be at least 1");
    if (needs_capacity()) {
      if (capacity_or_throw() < 0) throw InvalidParameter("memory capacity A must be nonnegative");
    }
  }

  std::string label() const {
    std::string s = to_string(scheme);
    if (needs_capacity() && capacity) s += ":" + std::to_string(*capacity);
    return s;
  }
};

struct MemoryStationary {
  double pi0 = 1.0;
  std::optional<std::vector<double>> pi;  // absent for the infinite CP chain
  std::string regime_note;                // "transient" for CP when d(1 - rho) >= 1
};

namespace detail {

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// P{exactly j of d probes find an idle server}
inline double idle_among_probes(int d, int j, double rho) {
  return binomial(d, j) * std::pow(rho, d - j) * std::pow(1.0 - rho, j);
}

inline void check_load(double rho) {
  if (!(rho >= 0) || !(rho < 1)) throw OutOfRange("load rho must lie in [0, 1)");
}

// 1 - (1 - x)^a without cancellation for tiny x.
inline double one_minus_pow_complement(double x, double a) { return -std::expm1(a * std::log1p(-x)); }

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

// IP memory chain on {0, ..., d-1}: the next arrival after an empty-memory
// probe that found l+1 idle servers sees l stored ids.
inline Eigen::MatrixXd ip_transition_matrix(double rho, int d) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  M(0, 0) = std::pow(rho, d) + d * std::pow(rho, d - 1) * (1.0 - rho);
  for (int l = 1; l < d; ++l) M(0, l) = detail::idle_among_probes(d, l + 1, rho);
  for (int k = 1; k < d; ++k) M(k, k - 1) = 1.0;
  return M;
}

// BCP memory chain on {0, ..., A}: the CP transitions with every jump past A
// folded into state A.
inline Eigen::MatrixXd bcp_transition_matrix(double rho, int d, int A) {
  if (d < 1) throw InvalidParameter("probe count d must be at least 1");
  if (A < 0) throw InvalidParameter("memory capacity A must be nonnegative");
  detail::check_load(rho);
  const int size = A + 1;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(size, size);
  M(0, 0) += std::pow(rho, d) + d * std::pow(rho, d - 1) * (1.0 - rho);
  for (int l = 1; l < d; ++l) M(0, std::min(l, A)) += detail::idle_among_probes(d, l + 1, rho);
  for (int k = 1; k <= A; ++k)
    for (int l = 0; l <= d; ++l) M(k, std::min(k - 1 + l, A)) += detail::idle_among_probes(d, l, rho);
  return M;
}

// Probability that the dispatcher's memory is empty at an arrival, with the
// full stationary vector whenever the chain is finite. rho = 0 returns the
// rho -> 0+ limit.
inline MemoryStationary pi0(const MemorySchemeSpec& spec, double rho) {
  spec.validate();
  detail::check_load(rho);
  const int d = spec.d;
  MemoryStationary out;

  switch (spec.scheme) {
    case Scheme::none:
      out.pi0 = 1.0;
      out.pi = std::vector<double>{1.0};
      break;

    case Scheme::ip: {
      const double p0 = 1.0 / (std::pow(rho, d) + (1.0 - rho) * d);
      std::vector<double> pi(d);
      pi[0] = p0;
      double cumulative = detail::idle_among_probes(d, 0, rho);
      for (int k = 1; k < d; ++k) {
        cumulative += detail::idle_among_probes(d, k, rho);
        pi[k] = p0 * (1.0 - cumulative);
      }
      out.pi0 = p0;
      out.pi = std::move(pi);
      break;
    }

    case Scheme::cp: {
      if (d == 1) {
        out.pi0 = 1.0;
      } else if (d * (1.0 - rho) < 1.0) {
        out.pi0 = (1.0 - d * (1.0 - rho)) / std::pow(rho, d);
      } else {
        out.pi0 = 0.0;
        out.regime_note = d * (1.0 - rho) == 1.0 ? "transient (null-recurrent boundary)" : "transient";
      }
      break;
    }

    case Scheme::bcp: {
      const int A = spec.capacity_or_throw();
      if (rho == 0) {
        // All probes find idle servers: memory fills to A unless nothing is ever stored.
        const int state = (d >= 2 && A >= 1) ? A : 0;
        std::vector<double> pi(A + 1, 0.0);
        pi[state] = 1.0;
        out.pi0 = pi[0];
        out.pi = std::move(pi);
        break;
      }
      const Eigen::VectorXd pi = stationary_distribution(bcp_transition_matrix(rho, d, A));
      out.pi0 = pi(0);
      out.pi = detail::to_std(pi);
      break;
    }

    case Scheme::ism: {
      const int A = spec.capacity_or_throw();
      const double rd = std::pow(rho, d);
      const double p0 = rd > 0 ? detail::one_minus_pow_complement(rd, 1.0 / (A + 1)) / rd : 1.0 / (A + 1);
      // Birth-death memory: births at lambda(1 - pi0 rho^d), deaths at lambda.
      const double ratio = 1.0 - p0 * rd;
      std::vector<double> pi(A + 1);
      double term = p0;
      for (int i = 0; i <= A; ++i, term *= ratio) pi[i] = term;
      out.pi0 = p0;
      out.pi = std::move(pi);
      break;
    }
  }
  return out;
}

// d = 2 BCP closed form; rho = 1/2 is its removable singularity (value 1/(A+1)).
inline double bcp_pi0_d2_closed_form(double rho, int A) {
  const double r = (1.0 - rho) / rho;
  if (r == 1.0) return 1.0 / (A + 1);
  return (1.0 - r * r) / (1.0 - std::pow(r, 2.0 * (A + 1)));
}

// Expected probes per arrival. one_at_a_time selects the sequential-probe
// accounting (stop at the first idle server, or when a bounded memory is full).
inline double probes_per_arrival(const MemorySchemeSpec& spec, double rho, bool one_at_a_time) {
  spec.validate();
  detail::check_load(rho);
  const int d = spec.d;
  const double rd = std::pow(rho, d);
  switch (spec.scheme) {
    case Scheme::none:
      return one_at_a_time ? (1.0 - rd) / (1.0 - rho) : d;
    case Scheme::ip:
      return pi0(spec, rho).pi0 * d;
    case Scheme::cp:
      return d;
    case Scheme::bcp:
      return one_at_a_time ? (1.0 - pi0(spec, rho).pi0 * rd) / (1.0 - rho) : d;
    case Scheme::ism: {
      const double p0 = pi0(spec, rho).pi0;
      return one_at_a_time ? p0 * (1.0 - rd) / (1.0 - rho) : p0 * d;
    }
  }
  return d;
}

// ISM probes (sequential, memory-empty arrivals only) plus idle notifications.
inline double ism_messages_per_arrival(const MemorySchemeSpec& spec, double rho) {
  if (spec.scheme != Scheme::ism) throw WrongScheme("ism_messages_per_arrival needs the ISM scheme");
  const double p0 = pi0(spec, rho).pi0;
  const double rd = std::pow(rho, spec.d);
  return p0 * (1.0 - rd) / (1.0 - rho) + (1.0 - p0 * rd);
}

}  // namespace memlb
