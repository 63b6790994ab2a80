#pragma once

// Reference computations for the tests. Everything here is built from the
// model definitions directly and shares no code with the library beyond the
// job-size types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline double choose(int n, int k) {
  if (k < 0 || k > n) return 0;
  double c = 1;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

// P{exactly j of d probes idle}
inline double idle(int d, int j, double rho) { return choose(d, j) * std::pow(rho, d - j) * std::pow(1 - rho, j); }

// Solves pi P = pi, sum pi = 1 with a dense full-pivot LU.
inline Eigen::VectorXd lu_stationary(const Eigen::MatrixXd& P) {
  const auto n = P.rows();
  Eigen::MatrixXd M = P.transpose() - Eigen::MatrixXd::Identity(n, n);
  M.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1;
  return M.fullPivLu().solve(b);
}

inline Eigen::MatrixXd ip_chain(double rho, int d) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  M(0, 0) = idle(d, 0, rho) + idle(d, 1, rho);
  for (int l = 1; l < d; ++l) M(0, l) = idle(d, l + 1, rho);
  for (int k = 1; k < d; ++k) M(k, k - 1) = 1;
  return M;
}

// CP chain cut at `cap` with jumps past the cap folded into it. With cap = A
// this is exactly the BCP chain.
inline Eigen::MatrixXd cp_chain(double rho, int d, int cap) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(cap + 1, cap + 1);
  M(0, 0) += idle(d, 0, rho) + idle(d, 1, rho);
  for (int j = 2; j <= d; ++j) M(0, std::min(j - 1, cap)) += idle(d, j, rho);
  for (int k = 1; k <= cap; ++k)
    for (int l = 0; l <= d; ++l) M(k, std::min(k - 1 + l, cap)) += idle(d, l, rho);
  return M;
}

// ISM: memory occupancy is birth-death with births at 1 - pi0 rho^d and deaths
// at 1 (per unit arrival rate). pi0 solves its own fixed point; found by bisection
// on the balance equations.
inline double ism_pi0(double rho, int d, int A) {
  auto balance = [&](double x) {
    const double birth = 1 - x * std::pow(rho, d);
    std::vector<double> pi(A + 1);
    pi[0] = 1;
    double s = 1;
    for (int k = 1; k <= A; ++k) s += pi[k] = pi[k - 1] * birth;
    return pi[0] / s;
  };
  double lo = 0, hi = 1;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (balance(mid) > mid ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Adaptive Simpson.
inline double simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-12, int depth = 50) {
  std::function<double(double, double, double, double, double, double, double, int)> rec =
      [&](double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
        const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = f(lm), frm = f(rm);
        const double left = (m - a) / 6 * (fa + 4 * flm + fm);
        const double right = (b - m) / 6 * (fm + 4 * frm + fb);
        if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15;
        return rec(a, m, fa, flm, fm, left, tol / 2, depth - 1) + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, depth);
}

// Integral over [0, inf) of a decaying function, split into unit pieces until
// a piece contributes less than tol.
inline double integrate_tail(const std::function<double(double)>& f, double tol = 1e-13, double piece = 1.0) {
  double s = 0;
  for (double a = 0;; a += piece) {
    const double p = simpson(f, a, a + piece, tol * 1e-2);
    s += p;
    if (std::abs(p) < tol && a > 4) return s;
  }
}

// SQ(d) cavity tails from the level-crossing balance
// mu u_k = lambda pi0 u_{k-1}^d (k >= 2), u_1 = rho.
inline std::vector<double> sq_tail_recursion(int d, double lambda, double mu, double pi0, double eps = 1e-300) {
  std::vector<double> u{1.0, lambda / mu};
  while (true) {
    const double next = lambda * pi0 * std::pow(u.back(), d) / mu;
    if (next < eps || u.size() > 400) break;
    u.push_back(next);
  }
  return u;
}

inline double erlang_ccdf(int k, double mu, double w) {
  double term = std::exp(-mu * w), s = 0;
  for (int n = 0; n < k; ++n) {
    s += term;
    term *= mu * w / (n + 1);
  }
  return s;
}

// Response-time ccdf of SQ(d) with memory, exponential jobs, by arrival case:
// memory hit or idle probe gives one service, joining k jobs gives Erlang(k+1).
inline double sq_response_ccdf(int d, double lambda, double mu, double pi0, double w) {
  const auto u = sq_tail_recursion(d, lambda, mu, pi0);
  double r = (1 - pi0) * std::exp(-mu * w);
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double next = k + 1 < u.size() ? u[k + 1] : 0.0;
    r += pi0 * (std::pow(u[k], d) - std::pow(next, d)) * erlang_ccdf(static_cast<int>(k) + 1, mu, w);
  }
  return r;
}

// LL(d) with memory, exponential jobs: F' = -lambda[e^{-mu w} + pi0(-F^d + I)],
// I' = mu F^d - mu I, F(0) = rho, I(0) = 0. Classic RK4 with step h; returns F
// sampled every `every` steps.
inline std::vector<double> ll_workload_ode(int d, double lambda, double mu, double pi0, double w_max, double h, int every) {
  auto rhs = [&](double w, double F, double I, double& dF, double& dI) {
    const double Fd = std::pow(F, d);
    dF = -lambda * (std::exp(-mu * w) + pi0 * (I - Fd));
    dI = mu * Fd - mu * I;
  };
  std::vector<double> out{lambda / mu};
  double F = lambda / mu, I = 0;
  const int steps = static_cast<int>(std::llround(w_max / h));
  for (int s = 0; s < steps; ++s) {
    const double w = s * h;
    double k1f, k1i, k2f, k2i, k3f, k3i, k4f, k4i;
    rhs(w, F, I, k1f, k1i);
    rhs(w + h / 2, F + h / 2 * k1f, I + h / 2 * k1i, k2f, k2i);
    rhs(w + h / 2, F + h / 2 * k2f, I + h / 2 * k2i, k3f, k3i);
    rhs(w + h, F + h * k3f, I + h * k3i, k4f, k4i);
    F += h / 6 * (k1f + 2 * k2f + 2 * k3f + k4f);
    I += h / 6 * (k1i + 2 * k2i + 2 * k3i + k4i);
    if ((s + 1) % every == 0) out.push_back(F);
  }
  return out;
}

// Per-phase SQ(d) cavity ODE in the original (memory) coordinates:
//   du_{1,j} = (u_1 A)_j + (u_2 nu) alpha_j + [lambda pi0 (1 - u_1^d) + lambda (1 - pi0)] alpha_j
//   du_{k,j} = (u_k A)_j + (u_{k+1} nu) alpha_j + lambda pi0 (u_{k-1}^d - u_k^d)/(u_{k-1} - u_k) (u_{k-1,j} - u_{k,j})
// integrated with fixed-step RK4 from an empty system until stationary.
struct PhTails {
  std::vector<double> u;                   // u[0] = 1
  std::vector<std::vector<double>> phase;  // phase[k][j], k >= 1
};

inline PhTails sq_ph_memory_ode(int d, double lambda, const Eigen::RowVectorXd& alpha, const Eigen::MatrixXd& A, double pi0,
                                int levels, double dt, double tol) {
  const auto n = A.rows();
  const Eigen::VectorXd nu = -A * Eigen::VectorXd::Ones(n);
  using M = Eigen::MatrixXd;
  auto rhs = [&](const M& v) {
    M out = M::Zero(levels + 1, n);
    for (int k = 1; k <= levels; ++k) {
      const double tk = v.row(k).sum();
      const double tprev = k == 1 ? 1.0 : v.row(k - 1).sum();
      out.row(k) = v.row(k) * A;
      if (k < levels) out.row(k) += v.row(k + 1).dot(nu.transpose()) * alpha;
      if (k == 1) {
        out.row(k) += (lambda * pi0 * (1 - std::pow(tk, d)) + lambda * (1 - pi0)) * alpha;
      } else if (tprev - tk > 0) {
        const double q = (std::pow(tprev, d) - std::pow(tk, d)) / (tprev - tk);
        out.row(k) += lambda * pi0 * q * (v.row(k - 1) - v.row(k));
      }
    }
    return out;
  };
  M v = M::Zero(levels + 1, n);
  for (int it = 0; it < 50000000; ++it) {
    const M k1 = rhs(v);
    if (it % 100 == 0 && k1.cwiseAbs().maxCoeff() < tol) break;
    const M k2 = rhs(v + dt / 2 * k1);
    const M k3 = rhs(v + dt / 2 * k2);
    const M k4 = rhs(v + dt * k3);
    v += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  PhTails t;
  t.u.push_back(1.0);
  t.phase.emplace_back();
  for (int k = 1; k <= levels; ++k) {
    t.u.push_back(v.row(k).sum());
    std::vector<double> row(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = v(k, j);
    t.phase.push_back(std::move(row));
  }
  return t;
}

// One-sample Kolmogorov-Smirnov statistic against a cdf.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double D = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    D = std::max({D, (i + 1) / n - F, F - i / n});
  }
  return D;
}

}  // namespace oracle
