#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "memlb/errors.hpp"
#include "memlb/jobsize.hpp"
#include "memlb/memory.hpp"

namespace memlb {

// Equilibrium of the SQ(d) queue at the cavity with dispatcher memory.
struct SqCavitySolution {
  int d = 1;
  double lambda = 0;
  double pi0 = 1;
  double lambda_eff = 0;  // lambda * pi0^{1/d}
  double tail_eps = 1e-14;
  std::vector<double> u;  // u[k] = P{queue length >= k}, u[0] = 1
  // PH job sizes only: phase_tails[k][j] = P{>= k jobs, head job in phase j};
  // phase_tails[0] is left empty.
  std::vector<std::vector<double>> phase_tails;
  double residual = 0;  // stationarity residual of the ODE solve (PH only)
};

namespace detail {

inline void check_sq_args(int d, double lambda, double mu, double pi0) {
  if (d < 1) throw InvalidParameter("probe count d must be at least 1");
  if (!(lambda > 0)) throw InvalidParameter("arrival rate must be positive");
  if (!(mu > 0)) throw InvalidParameter("service rate must be positive");
  if (!(lambda < mu)) throw InstabilityError("unstable system: lambda >= mu");
  if (!(pi0 >= 0 && pi0 <= 1)) throw InvalidParameter("pi0 must lie in [0, 1]");
}

// (x^d - y^d) / (x - y), evaluated without the cancellation.
inline double power_difference_quotient(double x, double y, int d) {
  double s = 0, xp = 1;
  for (int i = 0; i < d; ++i) {
    s += xp * std::pow(y, d - 1 - i);
    xp *= x;
  }
  return s;
}

}  // namespace detail

// Queue-length tail u_k = rho^{(d^k-1)/(d-1)} pi0^{(d^{k-1}-1)/(d-1)},
// truncated once u_k < tail_eps. The exponents satisfy e_k = d e_{k-1} + 1,
// which also gives the d = 1 limit e_k = k.
inline SqCavitySolution sq_queue_tail(int d, double lambda, double mu, double pi0, double tail_eps = 1e-14) {
  detail::check_sq_args(d, lambda, mu, pi0);
  SqCavitySolution sol;
  sol.d = d;
  sol.lambda = lambda;
  sol.pi0 = pi0;
  sol.lambda_eff = lambda * std::pow(pi0, 1.0 / d);
  sol.tail_eps = tail_eps;
  sol.u.push_back(1.0);

  const double rho = lambda / mu;
  if (pi0 == 0) {
    sol.u.push_back(rho);
    return sol;
  }
  const double log_rho = std::log(rho);
  const double log_pi0 = std::log(pi0);
  const double log_eps = std::log(tail_eps);
  double e_prev = 0, e = 1;
  for (;;) {
    const double log_u = e * log_rho + e_prev * log_pi0;
    if (log_u < log_eps) break;
    sol.u.push_back(e == 1 ? rho : std::exp(log_u));
    e_prev = e;
    e = d * e + 1;
  }
  return sol;
}

// E[R] = (1/lambda') sum_{k>=1} (lambda'/mu)^{(d^k-1)/(d-1)}, lambda' = lambda pi0^{1/d}.
inline double sq_mean_response(int d, double lambda, double mu, double pi0) {
  detail::check_sq_args(d, lambda, mu, pi0);
  if (pi0 == 0) return 1.0 / mu;
  const double lam = lambda * std::pow(pi0, 1.0 / d);
  if (d == 1) return 1.0 / (mu - lam);
  const double log_r = std::log(lam / mu);
  double sum = 0, e = 1;
  for (;;) {
    const double term = std::exp(e * log_r);
    sum += term;
    if (term < 1e-16 * sum) break;
    e = d * e + 1;
  }
  return sum / lam;
}

// P{R > w} = sum_n Poisson(n; mu w) v_n^d with v_n = pi0^{1/d} u_n, v_0 = 1.
// The tail after term n is bounded by v_{n+1}^d, so the sum stops there once
// that bound drops below 1e-16.
inline double sq_response_ccdf(int d, double lambda, double mu, double pi0, double w) {
  detail::check_sq_args(d, lambda, mu, pi0);
  if (!(w >= 0)) throw DomainError("sq_response_ccdf: w must be nonnegative");
  if (w == 0) return 1.0;
  const double mw = mu * w;
  const double log_mw = std::log(mw);
  const double log_r = pi0 > 0 ? std::log(lambda * std::pow(pi0, 1.0 / d) / mu) : -std::numeric_limits<double>::infinity();
  const double log_cut = std::log(1e-16);

  double sum = std::exp(-mw);  // n = 0
  double e = 1;                // e_n for n = 1
  for (int n = 1;; ++n) {
    const double log_vd = d * e * log_r;
    if (log_vd < log_cut) break;
    sum += std::exp(-mw + n * log_mw - std::lgamma(n + 1.0) + log_vd);
    e = d * e + 1;
  }
  return std::min(sum, 1.0);
}

// ---------------------------------------------------------------------------
// Transient mean-field dynamics with quasi-stationary memory.

struct TransientOptions {
  double horizon = 100.0;
  double dt = 0.05;  // initial RK4 step; halved when step doubling disagrees
  double record_interval = 1.0;
  double step_tol = 1e-10;
};

struct TransientSnapshot {
  double t = 0;
  double pi0 = 1;
  std::vector<double> u;  // u[0] = 1
};

namespace detail {

inline double memory_pi0_at(const MemorySchemeSpec& scheme, double busy_fraction) {
  // u_1 in [0, 1] by construction; pi0() needs rho < 1.
  const double rho = std::clamp(busy_fraction, 0.0, std::nextafter(1.0, 0.0));
  return pi0(scheme, rho).pi0;
}

inline void transient_rhs(int d, double lambda, double mu, double p0, const std::vector<double>& u,
                          std::vector<double>& out) {
  const std::size_t K = u.size() - 1;
  out.assign(u.size(), 0.0);
  for (std::size_t k = 1; k <= K; ++k) {
    const double next = k < K ? u[k + 1] : 0.0;
    out[k] = lambda * p0 * (std::pow(u[k - 1], d) - std::pow(u[k], d)) - mu * (u[k] - next);
  }
  out[1] += lambda * (1.0 - p0);
}

}  // namespace detail

// du/dt of the memory-aware SQ(d) ODEs at state u (u[0] = 1, u_{K+1} = 0),
// with pi0 recomputed from the current busy fraction u_1.
inline std::vector<double> sq_transient_rhs(int d, double lambda, double mu, const MemorySchemeSpec& scheme,
                                            std::span<const double> u) {
  if (u.empty() || u[0] != 1.0) throw InvalidState("tail sequence must start with u_0 = 1");
  std::vector<double> state(u.begin(), u.end());
  std::vector<double> out;
  detail::transient_rhs(d, lambda, mu, detail::memory_pi0_at(scheme, state.size() > 1 ? state[1] : 0.0), state, out);
  return out;
}

inline std::vector<TransientSnapshot> sq_transient(int d, double lambda, double mu, const MemorySchemeSpec& scheme,
                                                   std::span<const double> u_init, const TransientOptions& opt = {}) {
  detail::check_sq_args(d, lambda, mu, 1.0);
  scheme.validate();
  if (scheme.scheme != Scheme::none && scheme.d != d)
    throw InvalidParameter("sq_transient: scheme probe count differs from d");
  if (!(opt.dt > 0) || !(opt.horizon >= 0) || !(opt.record_interval > 0))
    throw InvalidParameter("sq_transient: dt, horizon and record_interval must be positive");
  if (u_init.empty() || u_init[0] != 1.0) throw InvalidState("tail sequence must start with u_0 = 1");
  for (std::size_t k = 1; k < u_init.size(); ++k)
    if (!(u_init[k] >= 0) || u_init[k] > u_init[k - 1]) throw InvalidState("tail sequence must be nonincreasing in [0, 1]");

  // Truncation: the memoryless fixed point rho^{e_k} bounds the equilibrium
  // tail for every scheme, and the initial state must fit as well.
  constexpr double kTruncation = 1e-14;
  const double rho = lambda / mu;
  std::size_t K = 1;
  for (double e = 1; std::pow(rho, e) >= kTruncation; e = d * e + 1) ++K;
  for (std::size_t k = u_init.size(); k-- > 1;)
    if (u_init[k] >= kTruncation) {
      K = std::max(K, k + 1);
      break;
    }
  K += 3;

  std::vector<double> u(K + 1, 0.0);
  std::copy(u_init.begin(), u_init.end(), u.begin());

  auto pi0_of = [&](const std::vector<double>& s) { return detail::memory_pi0_at(scheme, s[1]); };
  std::vector<double> k1, k2, k3, k4, tmp(u.size());
  auto rk4 = [&](const std::vector<double>& s, double h) {
    auto eval = [&](const std::vector<double>& x, std::vector<double>& out) {
      detail::transient_rhs(d, lambda, mu, pi0_of(x), x, out);
    };
    eval(s, k1);
    for (std::size_t i = 1; i < s.size(); ++i) tmp[i] = s[i] + 0.5 * h * k1[i];
    tmp[0] = 1.0;
    eval(tmp, k2);
    for (std::size_t i = 1; i < s.size(); ++i) tmp[i] = s[i] + 0.5 * h * k2[i];
    eval(tmp, k3);
    for (std::size_t i = 1; i < s.size(); ++i) tmp[i] = s[i] + h * k3[i];
    eval(tmp, k4);
    std::vector<double> next(s);
    for (std::size_t i = 1; i < s.size(); ++i) next[i] = s[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return next;
  };

  std::vector<TransientSnapshot> trajectory;
  double t = 0;
  double dt = opt.dt;
  double next_record = 0;
  auto record = [&] {
    trajectory.push_back({t, pi0_of(u), u});
    next_record += opt.record_interval;
  };
  record();

  while (t < opt.horizon) {
    const double target = std::min(next_record, opt.horizon);
    while (t < target) {
      const double h = std::min(dt, target - t);
      const std::vector<double> full = rk4(u, h);
      const std::vector<double> half = rk4(rk4(u, h / 2), h / 2);
      double err = 0;
      for (std::size_t i = 1; i < u.size(); ++i) err = std::max(err, std::abs(full[i] - half[i]));
      if (err > opt.step_tol && h > 1e-8) {
        dt = h / 2;
        continue;
      }
      u = half;
      t += h;
    }
    if (t >= next_record || t >= opt.horizon) record();
  }
  return trajectory;
}

// ---------------------------------------------------------------------------
// Phase-type job sizes.

struct PhOdeOptions {
  double tol = 1e-10;       // stationarity: sup-norm of the time derivative
  double dt = 0;            // 0 picks a step from the fastest rate
  double max_time = 1e6;    // simulated ODE time before giving up
  std::size_t levels = 0;   // 0 picks the truncation level automatically
};

namespace detail {

struct PhCavityOde {
  int d;
  double lam;  // effective arrival rate
  Eigen::RowVectorXd alpha;
  Eigen::MatrixXd A;
  Eigen::VectorXd nu;

  // v is (K+1) x n with row 0 unused; rows beyond K are zero.
  void rhs(const Eigen::MatrixXd& v, Eigen::MatrixXd& out) const {
    const Eigen::Index K = v.rows() - 1;
    out.setZero(v.rows(), v.cols());
    Eigen::VectorXd tot = v.rowwise().sum();
    tot(0) = 1.0;
    for (Eigen::Index k = 1; k <= K; ++k) {
      const double exits_above = k < K ? v.row(k + 1).dot(nu.transpose()) : 0.0;
      out.row(k).noalias() = v.row(k) * A;
      out.row(k) += exits_above * alpha;
      if (k == 1) {
        out.row(1) += lam * (1.0 - std::pow(tot(1), d)) * alpha;
      } else {
        const double q = power_difference_quotient(tot(k - 1), tot(k), d);
        out.row(k) += lam * q * (v.row(k - 1) - v.row(k));
      }
    }
  }
};

}  // namespace detail

// Equilibrium of the SQ(d) cavity queue with PH job sizes. Time-steps the
// memoryless per-phase ODEs at rate lambda' = lambda pi0^{1/d} (RK4) until the
// derivative's sup-norm drops below opt.tol, then rescales u_{k,j} = pi0^{-1/d} v_{k,j}.
inline SqCavitySolution sq_ph_equilibrium(int d, double lambda, const PhaseType& ph, double pi0,
                                          const PhOdeOptions& opt = {}) {
  detail::validate(ph);
  const double mean = ph_moment(ph, 1);
  detail::check_sq_args(d, lambda, 1.0 / mean, pi0);
  const auto n = static_cast<Eigen::Index>(ph.phases());
  const Eigen::RowVectorXd residual_phase = ph.alpha * (-ph.generator).inverse();  // sums to mean

  SqCavitySolution sol;
  sol.d = d;
  sol.lambda = lambda;
  sol.pi0 = pi0;
  sol.lambda_eff = lambda * std::pow(pi0, 1.0 / d);
  sol.u = {1.0};
  sol.phase_tails = {{}};

  if (pi0 == 0) {
    // Every arrival goes to an idle server: at most one job per queue.
    const Eigen::RowVectorXd u1 = lambda * residual_phase;
    sol.u.push_back(u1.sum());
    sol.phase_tails.emplace_back(u1.data(), u1.data() + n);
    return sol;
  }

  const detail::PhCavityOde ode{d, sol.lambda_eff, ph.alpha, ph.generator, ph.exit_rates()};
  const double rho_eff = sol.lambda_eff * mean;

  std::size_t K = opt.levels;
  if (K == 0) {
    K = 1;
    for (double e = 1; std::pow(lambda * mean, e) >= 1e-16 && K < 20000; e = d * e + 1) ++K;
    K = 2 * K + 10;
  }

  // Start from the exponential-job profile split by residual phase.
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K) + 1, n);
  {
    double e = 1;
    for (std::size_t k = 1; k <= K; ++k, e = d * e + 1) {
      const double level = std::pow(rho_eff, e);
      if (level < 1e-300) break;
      v.row(static_cast<Eigen::Index>(k)) = level * residual_phase / mean;
    }
  }

  const double fastest = ph.generator.diagonal().cwiseAbs().maxCoeff() + sol.lambda_eff * d;
  const double dt = opt.dt > 0 ? opt.dt : std::min(0.2, 0.5 / fastest);
  Eigen::MatrixXd k1, k2, k3, k4;
  double t = 0;
  double residual = std::numeric_limits<double>::infinity();

  for (;;) {
    ode.rhs(v, k1);
    residual = k1.cwiseAbs().maxCoeff();
    if (residual < opt.tol) {
      // Grow the truncation if the last level still carries mass.
      if (v.row(v.rows() - 1).sum() > 1e-14) {
        const Eigen::Index old = v.rows();
        v.conservativeResize(2 * old - 1, n);
        v.bottomRows(old - 1).setZero();
        continue;
      }
      break;
    }
    if (t > opt.max_time) throw ConvergenceError("sq_ph_equilibrium did not reach stationarity", residual);
    ode.rhs(v + 0.5 * dt * k1, k2);
    ode.rhs(v + 0.5 * dt * k2, k3);
    ode.rhs(v + dt * k3, k4);
    v += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    t += dt;
  }

  sol.residual = residual;
  const double scale = std::pow(pi0, -1.0 / d);
  for (Eigen::Index k = 1; k < v.rows(); ++k) {
    const Eigen::RowVectorXd row = scale * v.row(k);
    const double total = row.sum();
    if (total < sol.tail_eps) break;
    sol.u.push_back(total);
    sol.phase_tails.emplace_back(row.data(), row.data() + n);
  }
  return sol;
}

// Mean response by Little's law: E[R] = sum_{k>=1} u_k / lambda.
inline double sq_mean_response_from_tail(const SqCavitySolution& sol) {
  double s = 0;
  for (std::size_t k = 1; k < sol.u.size(); ++k) s += sol.u[k];
  return s / sol.lambda;
}

// Response-time ccdf for PH job sizes, assembled from the arrival cases:
// a job served from memory (prob. 1 - pi0) or finding an idle probed queue
// sees only its own service; a job joining a queue with k jobs whose head is
// in phase j waits for that residual plus k full services (its own included).
inline double sq_ph_response_ccdf(const SqCavitySolution& sol, const PhaseType& ph, double w) {
  if (!(w >= 0)) throw DomainError("sq_ph_response_ccdf: w must be nonnegative");
  if (w == 0) return 1.0;
  if (sol.phase_tails.size() != sol.u.size()) throw InvalidState("solution carries no per-phase tails");
  const int d = sol.d;
  const double p0 = sol.pi0;
  const double gbar = ph_tail(ph, w);
  const std::size_t n = ph.phases();

  double result = (1.0 - p0) * gbar + p0 * (1.0 - std::pow(sol.u.size() > 1 ? sol.u[1] : 0.0, d)) * gbar;
  for (std::size_t k = 1; k < sol.u.size(); ++k) {
    const double uk = sol.u[k];
    const double uk1 = k + 1 < sol.u.size() ? sol.u[k + 1] : 0.0;
    const double join = p0 * (std::pow(uk, d) - std::pow(uk1, d));
    if (p0 * std::pow(uk, d) < 1e-15) break;
    if (!(uk - uk1 > 0)) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const double ukj = sol.phase_tails[k][j];
      const double uk1j = k + 1 < sol.u.size() ? sol.phase_tails[k + 1][j] : 0.0;
      const double share = (ukj - uk1j) / (uk - uk1);
      if (share <= 0) continue;
      result += share * join * ph_tail(ph_service_stack(ph, j, k), w);
    }
  }
  return std::clamp(result, 0.0, 1.0);
}

inline double sq_ph_response_ccdf(int d, double lambda, const PhaseType& ph, double pi0, double w) {
  return sq_ph_response_ccdf(sq_ph_equilibrium(d, lambda, ph, pi0), ph, w);
}

// JIQ (d = 1) with ISM memory of size A: M/G/1 at the reduced rate lambda pi0,
// pi0 = (1 - (1 - rho)^{1/(A+1)}) / rho; mean from Pollaczek-Khinchine.
inline double jiq_mean_response(double lambda, const JobSizeDistribution& dist, int A) {
  if (A < 0) throw InvalidParameter("memory capacity A must be nonnegative");
  const double m1 = dist.mean();
  const double m2 = dist.second_moment();
  if (!std::isfinite(m2)) throw UnsupportedDistribution("jiq_mean_response needs a finite second moment");
  const double rho = lambda * m1;
  if (!(lambda > 0)) throw InvalidParameter("arrival rate must be positive");
  if (!(rho < 1)) throw InstabilityError("unstable system: rho >= 1");
  const double p0 = pi0(MemorySchemeSpec{Scheme::ism, 1, A}, rho).pi0;
  const double lam = lambda * p0;
  return m1 + lam * m2 / (2.0 * (1.0 - lam * m1));
}

}  // namespace memlb
