#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>

#include "memlb/errors.hpp"
#include "memlb/rng.hpp"

namespace memlb {

struct Exponential {
  double rate;
};

// Two-phase hyperexponential: with probability p1 Exp(rate1), else Exp(rate2).
struct HyperExp2 {
  double p1, p2;
  double rate1, rate2;
};

// Absorption time of a CTMC with initial row vector alpha and subgenerator A.
struct PhaseType {
  Eigen::RowVectorXd alpha;
  Eigen::MatrixXd generator;

  std::size_t phases() const { return static_cast<std::size_t>(alpha.size()); }
  // nu = -A 1
  Eigen::VectorXd exit_rates() const { return -generator.rowwise().sum(); }
};

namespace detail {

constexpr double kStochasticTol = 1e-12;

inline void validate(const Exponential& e) {
  if (!(e.rate > 0) || !std::isfinite(e.rate)) throw InvalidParameter("exponential rate must be positive");
}

inline void validate(const HyperExp2& h) {
  if (!(h.p1 >= 0 && h.p2 >= 0) || std::abs(h.p1 + h.p2 - 1.0) > kStochasticTol)
    throw InvalidParameter("hyperexponential branch probabilities must sum to one");
  if (!(h.rate1 > 0 && h.rate2 > 0)) throw InvalidParameter("hyperexponential rates must be positive");
}

inline void validate(const PhaseType& ph) {
  const auto n = ph.alpha.size();
  if (n == 0 || ph.generator.rows() != n || ph.generator.cols() != n)
    throw InvalidParameter("phase-type alpha and A have inconsistent sizes");
  if ((ph.alpha.array() < 0).any() || std::abs(ph.alpha.sum() - 1.0) > kStochasticTol)
    throw InvalidParameter("phase-type alpha must be a stochastic vector");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(ph.generator(i, i) < 0)) throw InvalidParameter("phase-type A needs a strictly negative diagonal");
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && ph.generator(i, j) < 0) throw InvalidParameter("phase-type A has a negative off-diagonal entry");
  }
  const Eigen::VectorXd nu = ph.exit_rates();
  if ((nu.array() < -kStochasticTol).any()) throw InvalidParameter("phase-type A has a positive row sum");
  if (!(nu.maxCoeff() > 0)) throw InvalidParameter("phase-type exit vector is identically zero");
}

// Largest Poisson rate handled by one uniformization step; longer horizons are
// split into equal sub-steps so exp(-q t) never underflows.
constexpr double kUniformizationChunk = 20.0;
constexpr double kPoissonTailTol = 1e-17;

// v * exp(A t) by uniformization, for a nonnegative row vector v and a
// subgenerator A. Terms stop once k > 2qt and the Poisson weight is below
// kPoissonTailTol; the dropped tail is then at most twice that weight times |v|.
inline Eigen::RowVectorXd uniformized_product(const Eigen::RowVectorXd& v, const Eigen::MatrixXd& A, double t) {
  if (t == 0) return v;
  const double q = A.diagonal().cwiseAbs().maxCoeff();
  const auto n = A.rows();
  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n) + A / q;
  const int chunks = std::max(1, static_cast<int>(std::ceil(q * t / kUniformizationChunk)));
  const double qt = q * t / chunks;

  Eigen::RowVectorXd result = v;
  for (int c = 0; c < chunks; ++c) {
    Eigen::RowVectorXd term = result;
    double weight = std::exp(-qt);
    Eigen::RowVectorXd acc = weight * term;
    for (int k = 1; k <= 2 * qt || weight > kPoissonTailTol; ++k) {
      term = term * P;
      weight *= qt / k;
      acc += weight * term;
    }
    result = acc;
  }
  return result;
}

}  // namespace detail

// exp(A t) for a subgenerator, row by row through uniformization.
inline Eigen::MatrixXd subgenerator_exp(const Eigen::MatrixXd& A, double t) {
  const auto n = A.rows();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
    e(i) = 1.0;
    out.row(i) = detail::uniformized_product(e, A, t);
  }
  return out;
}

// P{X > w} = alpha exp(A w) 1 by uniformization (absolute error well below 1e-12).
inline double ph_tail(const PhaseType& ph, double w) {
  if (!(w >= 0)) throw DomainError("ph_tail: w must be nonnegative");
  return detail::uniformized_product(ph.alpha, ph.generator, w).sum();
}

inline double ph_density(const PhaseType& ph, double w) {
  if (!(w >= 0)) throw DomainError("ph_density: w must be nonnegative");
  return detail::uniformized_product(ph.alpha, ph.generator, w).dot(ph.exit_rates().transpose());
}

// E[X^k] = k! alpha (-A)^{-k} 1
inline double ph_moment(const PhaseType& ph, int k) {
  const auto lu = (-ph.generator).partialPivLu();
  Eigen::VectorXd x = Eigen::VectorXd::Ones(ph.generator.rows());
  double factorial = 1;
  for (int i = 1; i <= k; ++i) {
    x = lu.solve(x);
    factorial *= i;
  }
  return factorial * ph.alpha.dot(x.transpose());
}

inline PhaseType make_phase_type(Eigen::RowVectorXd alpha, Eigen::MatrixXd generator) {
  PhaseType ph{std::move(alpha), std::move(generator)};
  detail::validate(ph);
  return ph;
}

// Residual service of a head-of-line job currently in phase `head_phase`
// (0-based) followed by k further complete services. Block-bidiagonal
// subgenerator on (k+1)n phases: A on the diagonal, nu*alpha on the
// superdiagonal.
inline PhaseType ph_service_stack(const PhaseType& ph, std::size_t head_phase, std::size_t k) {
  const auto n = static_cast<Eigen::Index>(ph.phases());
  if (head_phase >= ph.phases()) throw DomainError("ph_service_stack: head phase out of range");
  const auto blocks = static_cast<Eigen::Index>(k + 1);
  const Eigen::MatrixXd coupling = ph.exit_rates() * ph.alpha;

  Eigen::MatrixXd stacked = Eigen::MatrixXd::Zero(blocks * n, blocks * n);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    stacked.block(b * n, b * n, n, n) = ph.generator;
    if (b + 1 < blocks) stacked.block(b * n, (b + 1) * n, n, n) = coupling;
  }
  Eigen::RowVectorXd init = Eigen::RowVectorXd::Zero(blocks * n);
  init(static_cast<Eigen::Index>(head_phase)) = 1.0;
  return PhaseType{std::move(init), std::move(stacked)};
}

class JobSizeDistribution {
 public:
  using Params = std::variant<Exponential, HyperExp2, PhaseType>;

  explicit JobSizeDistribution(Params params) : params_(std::move(params)) {
    std::visit([](const auto& p) { detail::validate(p); }, params_);
    if (!(mean() > 0) || !std::isfinite(mean())) throw InvalidParameter("job size mean must be positive and finite");
  }

  const Params& params() const { return params_; }

  bool is_exponential() const { return std::holds_alternative<Exponential>(params_); }

  double mean() const {
    return std::visit(
        [](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Exponential>)
            return 1.0 / p.rate;
          else if constexpr (std::is_same_v<T, HyperExp2>)
            return p.p1 / p.rate1 + p.p2 / p.rate2;
          else
            return ph_moment(p, 1);
        },
        params_);
  }

  double second_moment() const {
    return std::visit(
        [](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Exponential>)
            return 2.0 / (p.rate * p.rate);
          else if constexpr (std::is_same_v<T, HyperExp2>)
            return 2.0 * (p.p1 / (p.rate1 * p.rate1) + p.p2 / (p.rate2 * p.rate2));
          else
            return ph_moment(p, 2);
        },
        params_);
  }

  double scv() const {
    const double m = mean();
    return second_moment() / (m * m) - 1.0;
  }

  double ccdf(double w) const {
    if (!(w >= 0)) throw DomainError("ccdf: w must be nonnegative");
    return std::visit(
        [w](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Exponential>)
            return std::exp(-p.rate * w);
          else if constexpr (std::is_same_v<T, HyperExp2>)
            return p.p1 * std::exp(-p.rate1 * w) + p.p2 * std::exp(-p.rate2 * w);
          else
            return ph_tail(p, w);
        },
        params_);
  }

  double density(double w) const {
    if (!(w >= 0)) throw DomainError("density: w must be nonnegative");
    return std::visit(
        [w](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Exponential>)
            return p.rate * std::exp(-p.rate * w);
          else if constexpr (std::is_same_v<T, HyperExp2>)
            return p.p1 * p.rate1 * std::exp(-p.rate1 * w) + p.p2 * p.rate2 * std::exp(-p.rate2 * w);
          else
            return ph_density(p, w);
        },
        params_);
  }

  // Exponential and HyperExp2 embed as 1- and 2-phase PH with diagonal A.
  PhaseType as_phase_type() const {
    return std::visit(
        [](const auto& p) -> PhaseType {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Exponential>) {
            Eigen::RowVectorXd a(1);
            a << 1.0;
            Eigen::MatrixXd g(1, 1);
            g << -p.rate;
            return PhaseType{a, g};
          } else if constexpr (std::is_same_v<T, HyperExp2>) {
            Eigen::RowVectorXd a(2);
            a << p.p1, p.p2;
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
            g(0, 0) = -p.rate1;
            g(1, 1) = -p.rate2;
            return PhaseType{a, g};
          } else {
            return p;
          }
        },
        params_);
  }

  double sample(RandomStream& rng) const {
    return std::visit(
        [&rng](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Exponential>) {
            return rng.exponential(p.rate);
          } else if constexpr (std::is_same_v<T, HyperExp2>) {
            return rng.uniform() < p.p1 ? rng.exponential(p.rate1) : rng.exponential(p.rate2);
          } else {
            return sample_ph(p, rng);
          }
        },
        params_);
  }

  // Short label used in CSV output: "exp", "hyperexp", "ph".
  std::string family() const {
    switch (params_.index()) {
      case 0: return "exp";
      case 1: return "hyperexp";
      default: return "ph";
    }
  }

 private:
  static Eigen::Index draw_index(const Eigen::RowVectorXd& weights, double total, RandomStream& rng) {
    double u = rng.uniform() * total;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      u -= weights(i);
      if (u < 0) return i;
    }
    return weights.size() - 1;
  }

  static double sample_ph(const PhaseType& p, RandomStream& rng) {
    const auto n = p.generator.rows();
    const Eigen::VectorXd nu = p.exit_rates();
    Eigen::Index phase = draw_index(p.alpha, 1.0, rng);
    double t = 0;
    Eigen::RowVectorXd jumps(n + 1);
    for (;;) {
      const double out = -p.generator(phase, phase);
      t += rng.exponential(out);
      for (Eigen::Index j = 0; j < n; ++j) jumps(j) = j == phase ? 0.0 : p.generator(phase, j);
      jumps(n) = nu(phase);
      const Eigen::Index next = draw_index(jumps, out, rng);
      if (next == n) return t;
      phase = next;
    }
  }

  Params params_;
};

inline JobSizeDistribution make_exponential(double mean) {
  if (!(mean > 0) || !std::isfinite(mean)) throw InvalidParameter("make_exponential: mean must be positive");
  return JobSizeDistribution(Exponential{1.0 / mean});
}

// Balanced-means two-phase fit: p1/rate1 = p2/rate2 = mean/2.
inline JobSizeDistribution make_balanced_hyperexp(double mean, double scv) {
  if (!(mean > 0) || !std::isfinite(mean)) throw InvalidParameter("make_balanced_hyperexp: mean must be positive");
  if (!(scv > 1)) throw InvalidParameter("make_balanced_hyperexp: a balanced two-phase hyperexponential needs SCV > 1");
  const double p1 = 0.5 * (1.0 + std::sqrt((scv - 1.0) / (scv + 1.0)));
  const double p2 = 1.0 - p1;
  return JobSizeDistribution(HyperExp2{p1, p2, 2.0 * p1 / mean, 2.0 * p2 / mean});
}

inline JobSizeDistribution make_phase_type_distribution(Eigen::RowVectorXd alpha, Eigen::MatrixXd generator) {
  return JobSizeDistribution(make_phase_type(std::move(alpha), std::move(generator)));
}

inline double sample(const JobSizeDistribution& dist, RandomStream& rng) { return dist.sample(rng); }

}  // namespace memlb
