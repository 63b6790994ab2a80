#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "memlb/errors.hpp"
#include "memlb/jobsize.hpp"

namespace memlb {

// Workload ccdf of the LL(d) cavity queue for exponential jobs, with w in
// time units (the closed form is written for mu = 1, so w -> mu w).
// Evaluated in logs so large w neither overflows nor cancels.
inline double ll_workload_ccdf_exp(int d, double lambda, double mu, double pi0, double w) {
  if (d < 1) throw InvalidParameter("probe count d must be at least 1");
  if (!(lambda > 0) || !(mu > 0)) throw InvalidParameter("rates must be positive");
  if (!(lambda < mu)) throw InstabilityError("unstable system: lambda >= mu");
  if (!(pi0 >= 0 && pi0 <= 1)) throw InvalidParameter("pi0 must lie in [0, 1]");
  if (!(w >= 0)) throw DomainError("ll_workload_ccdf_exp: w must be nonnegative");
  const double rho = lambda / mu;
  const double x = mu * w;
  if (w == 0) return rho;
  if (d == 1) return rho * std::exp(-(mu - lambda * pi0) * w);

  const double dm1 = d - 1.0;
  const double a = rho * pi0;
  const double b = std::pow(rho, 1.0 - d) - a;  // > 0 since rho^{-d} > 1 >= pi0
  // log(a + b e^{(d-1)x}) = (d-1)x + log b + log1p(a e^{-(d-1)x} / b)
  const double log_inner = dm1 * x + std::log(b) + std::log1p(a * std::exp(-dm1 * x) / b);
  return std::exp(-log_inner / dm1);
}

struct LlGridOptions {
  double h = 0;              // grid step; 0 means 1e-3 * mean
  double initial_W = 0;      // first truncation point; 0 means 16 * mean
  double tail_eps = 1e-10;   // W doubles until Fbar(W) < tail_eps
  double tol = 1e-10;        // sup-norm change of one more fixed-point sweep
  double theta = 1.0;        // damping of the fallback sweeps
  int max_sweeps = 200;
  double max_W_factor = 1e5; // give up past this many mean job sizes
};

struct LlCavitySolution {
  int d = 1;
  double lambda = 0;
  double pi0 = 1;
  double rho = 0;
  double h = 0;
  std::vector<double> grid;  // w_i = i h
  std::vector<double> Fbar;  // workload ccdf on the grid
  PhaseType ph;              // job sizes as a phase-type law
  // Row i: int_0^{w_i} pi0 Fbar(v)^d alpha e^{A(w_i - v)} dv (piecewise-linear integrand).
  Eigen::MatrixXd conv;
  int sweeps = 0;
  double change = 0;  // sup-norm change of the final certifying sweep

  double W() const { return grid.back(); }
};

namespace detail {

// Exact integrals of e^{As} against the two linear hat pieces on [0, h]:
//   W1 = int_0^h (1 - s/h) e^{As} ds,  W0 = int_0^h (s/h) e^{As} ds.
struct HatWeights {
  Eigen::MatrixXd E, W0, W1;
};

inline HatWeights hat_weights(const Eigen::MatrixXd& A, double h) {
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXd Ah = A * h;
  if (Ah.cwiseAbs().rowwise().sum().maxCoeff() > 1.0)
    throw InvalidParameter("grid step too coarse for the job-size rates");
  HatWeights out;
  out.E = subgenerator_exp(A, h);
  out.W0 = Eigen::MatrixXd::Zero(n, n);
  out.W1 = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);  // (Ah)^m
  double fact = 2.0;                                         // (m+2)!
  for (int m = 0; m < 60; ++m) {
    out.W0 += (m + 1.0) / fact * power;
    out.W1 += 1.0 / fact * power;
    power = power * Ah;
    fact *= (m + 3.0);
    if (power.cwiseAbs().maxCoeff() / fact < 1e-20) break;
  }
  out.W0 *= h;
  out.W1 *= h;
  return out;
}

inline HatWeights hat_weights_partial(const Eigen::MatrixXd& A, double delta) {
  if (delta <= 0) {
    const Eigen::Index n = A.rows();
    return {Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  }
  return hat_weights(A, delta);
}

}  // namespace detail

// Solves Fbar(w) = rho - lambda int_0^w (1 - pi0 Fbar(u)^d) Gbar(w - u) du.
// The integrand 1 - pi0 Fbar^d is taken piecewise linear between nodes and
// integrated exactly against Gbar = alpha e^{As} 1, which gives a causal
// recursion; each node is then an implicit scalar equation solved by Newton.
// One extra explicit sweep of the map certifies the result.
inline LlCavitySolution ll_fixed_point(int d, double lambda, const JobSizeDistribution& dist, double pi0,
                                       const LlGridOptions& opt = {}) {
  if (d < 1) throw InvalidParameter("probe count d must be at least 1");
  if (!(lambda > 0)) throw InvalidParameter("arrival rate must be positive");
  if (!(pi0 >= 0 && pi0 <= 1)) throw InvalidParameter("pi0 must lie in [0, 1]");
  if (!(opt.theta > 0 && opt.theta <= 1)) throw InvalidParameter("damping theta must lie in (0, 1]");
  const double mean = dist.mean();
  const double rho = lambda * mean;
  if (!(rho < 1)) throw InstabilityError("unstable system: rho >= 1");

  LlCavitySolution sol;
  sol.d = d;
  sol.lambda = lambda;
  sol.pi0 = pi0;
  sol.rho = rho;
  sol.ph = dist.as_phase_type();
  sol.h = opt.h > 0 ? opt.h : 1e-3 * mean;
  const double h = sol.h;
  const Eigen::Index n = static_cast<Eigen::Index>(sol.ph.phases());
  const detail::HatWeights hw = detail::hat_weights(sol.ph.generator, h);
  const Eigen::RowVectorXd aW0 = sol.ph.alpha * hw.W0;
  const Eigen::RowVectorXd aW1 = sol.ph.alpha * hw.W1;
  const double c1 = aW1.sum();

  auto phi = [&](double f) { return 1.0 - pi0 * std::pow(f, d); };

  double W = opt.initial_W > 0 ? opt.initial_W : 16.0 * mean;
  std::vector<double>& F = sol.Fbar;
  F.assign(1, rho);
  Eigen::RowVectorXd I = Eigen::RowVectorXd::Zero(n);
  std::size_t i = 0;
  for (;;) {
    const std::size_t M = static_cast<std::size_t>(std::ceil(W / h - 1e-9));
    F.reserve(M + 1);
    for (; i < M; ++i) {
      const Eigen::RowVectorXd known = I * hw.E + phi(F[i]) * aW0;
      const double b = rho - lambda * known.sum();
      double x = F[i];
      for (int it = 0; it < 50; ++it) {
        const double f = x - b + lambda * c1 * phi(x);
        const double fp = 1.0 - lambda * c1 * pi0 * d * std::pow(x, d - 1);
        const double step = f / fp;
        x -= step;
        if (std::abs(step) < 1e-16) break;
      }
      x = std::clamp(x, 0.0, rho);
      I = known + phi(x) * aW1;
      F.push_back(x);
    }
    if (F.back() < opt.tail_eps) break;
    if (W > opt.max_W_factor * mean)
      throw ConvergenceError("ll_fixed_point: workload tail never fell below tail_eps", F.back());
    W *= 2;
  }

  const std::size_t M = F.size() - 1;
  sol.grid.resize(M + 1);
  for (std::size_t k = 0; k <= M; ++k) sol.grid[k] = static_cast<double>(k) * h;

  // Certify: apply the discretized map once (explicitly) and measure the change.
  auto sweep = [&](const std::vector<double>& in, std::vector<double>& out) {
    out.resize(in.size());
    out[0] = rho;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(n);
    for (std::size_t k = 1; k < in.size(); ++k) {
      acc = acc * hw.E + phi(in[k - 1]) * aW0 + phi(in[k]) * aW1;
      out[k] = std::clamp(rho - lambda * acc.sum(), 0.0, rho);
    }
  };
  std::vector<double> next;
  for (;;) {
    sweep(F, next);
    ++sol.sweeps;
    double change = 0;
    for (std::size_t k = 0; k <= M; ++k) change = std::max(change, std::abs(next[k] - F[k]));
    sol.change = change;
    if (change < opt.tol) break;
    if (sol.sweeps >= opt.max_sweeps) throw ConvergenceError("ll_fixed_point did not converge", change);
    for (std::size_t k = 0; k <= M; ++k) F[k] += opt.theta * (next[k] - F[k]);
  }

  // Convolution state of pi0 Fbar^d, reused by the response ccdf and the IDE residual.
  sol.conv.setZero(static_cast<Eigen::Index>(M) + 1, n);
  for (std::size_t k = 1; k <= M; ++k) {
    const double p_prev = pi0 * std::pow(F[k - 1], d);
    const double p_cur = pi0 * std::pow(F[k], d);
    sol.conv.row(static_cast<Eigen::Index>(k)) =
        sol.conv.row(static_cast<Eigen::Index>(k) - 1) * hw.E + p_prev * aW0 + p_cur * aW1;
  }
  return sol;
}

namespace detail {

inline void check_on_grid(const LlCavitySolution& sol, double w) {
  if (!(w >= 0)) throw DomainError("w must be nonnegative");
  if (w > sol.W() * (1 + 1e-12)) throw ExtrapolationError("w lies beyond the solved workload grid; widen the grid");
}

// Fbar at w by linear interpolation between nodes.
inline double ll_fbar_at(const LlCavitySolution& sol, double w) {
  const double pos = w / sol.h;
  const std::size_t k = std::min(static_cast<std::size_t>(pos), sol.Fbar.size() - 1);
  if (k + 1 >= sol.Fbar.size()) return sol.Fbar.back();
  const double t = pos - static_cast<double>(k);
  return (1 - t) * sol.Fbar[k] + t * sol.Fbar[k + 1];
}

// int_0^w pi0 Fbar(v)^d alpha e^{A(w - v)} dv, continued from the last node below w.
inline Eigen::RowVectorXd ll_conv_at(const LlCavitySolution& sol, double w) {
  const std::size_t k = std::min(static_cast<std::size_t>(w / sol.h), sol.Fbar.size() - 1);
  const double delta = w - static_cast<double>(k) * sol.h;
  Eigen::RowVectorXd c = sol.conv.row(static_cast<Eigen::Index>(k));
  if (delta <= 1e-15 * std::max(1.0, w)) return c;
  const HatWeights hw = hat_weights_partial(sol.ph.generator, delta);
  const double p_left = sol.pi0 * std::pow(sol.Fbar[k], sol.d);
  const double p_right = sol.pi0 * std::pow(ll_fbar_at(sol, w), sol.d);
  return c * hw.E + p_left * (sol.ph.alpha * hw.W0) + p_right * (sol.ph.alpha * hw.W1);
}

}  // namespace detail

// P{R > w} = (1 - pi0) Gbar(w) + pi0 [ int_0^w Fbar(w - u)^d g(u) du + Gbar(w) ].
inline double ll_response_ccdf(const LlCavitySolution& sol, double w) {
  detail::check_on_grid(sol, w);
  if (w == 0) return 1.0;
  const double gbar = ph_tail(sol.ph, w);
  const double integral = sol.pi0 > 0 ? detail::ll_conv_at(sol, w).dot(sol.ph.exit_rates()) / sol.pi0 : 0.0;
  return (1 - sol.pi0) * gbar + sol.pi0 * (integral + gbar);
}

// Same quantity written through Hbar = pi0^{1/d} Fbar, the workload ccdf of
// the memoryless system at rate lambda pi0^{1/d}: Gbar(w) + int_0^w Hbar(w-u)^d g(u) du.
inline double ll_response_ccdf_rescaled(const LlCavitySolution& sol, double w) {
  detail::check_on_grid(sol, w);
  if (w == 0) return 1.0;
  return ph_tail(sol.ph, w) + detail::ll_conv_at(sol, w).dot(sol.ph.exit_rates());
}

// E[R] = (1/lambda') sum_{n>=0} rho'^{dn+1} / (1 + n(d-1)), lambda' = lambda pi0^{1/d}.
inline double ll_mean_response_exp(int d, double lambda, double mu, double pi0) {
  if (d < 1) throw InvalidParameter("probe count d must be at least 1");
  if (!(lambda > 0) || !(mu > 0)) throw InvalidParameter("rates must be positive");
  if (!(lambda < mu)) throw InstabilityError("unstable system: lambda >= mu");
  if (!(pi0 >= 0 && pi0 <= 1)) throw InvalidParameter("pi0 must lie in [0, 1]");
  if (pi0 == 0) return 1.0 / mu;
  const double lam = lambda * std::pow(pi0, 1.0 / d);
  if (d == 1) return 1.0 / (mu - lam);
  const double r = lam / mu;
  const double rd = std::pow(r, d);
  double sum = 0, power = r;
  for (long n = 0;; ++n) {
    const double term = power / (1.0 + static_cast<double>(n) * (d - 1));
    sum += term;
    if (term < 1e-16 * sum) break;
    power *= rd;
  }
  return sum / lam;
}

inline double trapezoid(const std::vector<double>& y, double h) {
  if (y.size() < 2) return 0.0;
  double s = 0.5 * (y.front() + y.back());
  for (std::size_t k = 1; k + 1 < y.size(); ++k) s += y[k];
  return s * h;
}

inline double ll_mean_workload(const LlCavitySolution& sol) { return trapezoid(sol.Fbar, sol.h); }

// E[R] = E[G] + pi0 int_0^inf Fbar(w)^d dw.
inline double ll_mean_response(const LlCavitySolution& sol) {
  std::vector<double> fd(sol.Fbar.size());
  for (std::size_t k = 0; k < fd.size(); ++k) fd[k] = std::pow(sol.Fbar[k], sol.d);
  return ph_moment(sol.ph, 1) + sol.pi0 * trapezoid(fd, sol.h);
}

// Largest gap between a central difference of Fbar and the integro-differential
// form Fbar' = -lambda [ Gbar(w) - pi0 Fbar(w)^d + pi0 int_0^w Fbar(u)^d g(w-u) du ]
// over interior nodes (the first and last `margin` nodes are skipped).
inline double ll_ide_residual(const LlCavitySolution& sol, std::size_t margin = 2) {
  const std::size_t M = sol.Fbar.size() - 1;
  if (M < 2 * margin + 1) throw InvalidState("grid too short for the residual check");
  const Eigen::VectorXd nu = sol.ph.exit_rates();
  const Eigen::MatrixXd stepE = subgenerator_exp(sol.ph.generator, sol.h);
  Eigen::RowVectorXd tail_state = sol.ph.alpha;  // alpha e^{A w_k}
  for (std::size_t k = 0; k < margin; ++k) tail_state = tail_state * stepE;
  double worst = 0;
  for (std::size_t k = margin; k + margin <= M; ++k) {
    const double lhs = (sol.Fbar[k + 1] - sol.Fbar[k - 1]) / (2 * sol.h);
    const double gbar = tail_state.sum();
    const double conv = sol.conv.row(static_cast<Eigen::Index>(k)).dot(nu);
    const double rhs = -sol.lambda * (gbar - sol.pi0 * std::pow(sol.Fbar[k], sol.d) + conv);
    worst = std::max(worst, std::abs(lhs - rhs));
    tail_state = tail_state * stepE;
  }
  return worst;
}

}  // namespace memlb
