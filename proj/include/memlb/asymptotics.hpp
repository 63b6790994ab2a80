#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "memlb/cavity_ll.hpp"
#include "memlb/cavity_sq.hpp"
#include "memlb/errors.hpp"
#include "memlb/memory.hpp"
#include "memlb/policy.hpp"

namespace memlb {

struct AsymptoticResult {
  enum class Kind { heavy_limit, low_ratio, pi0_zero_load };
  Kind kind = Kind::heavy_limit;
  double value = 0;    // may be +infinity for low_ratio
  std::string regime;  // human-readable parameter record
  bool inferred = false;
};

inline std::string to_string(AsymptoticResult::Kind k) {
  switch (k) {
    case AsymptoticResult::Kind::heavy_limit: return "heavy_limit";
    case AsymptoticResult::Kind::low_ratio: return "low_ratio";
    case AsymptoticResult::Kind::pi0_zero_load: return "pi0_zero_load";
  }
  return "?";
}

// lim_{lambda -> 1} -E[R_lambda] / log(1 - lambda). ISM divides by A + 1;
// every other scheme keeps the memoryless constant.
inline AsymptoticResult heavy_traffic_limit(Policy policy, const MemorySchemeSpec& scheme) {
  scheme.validate();
  const int d = scheme.d;
  if (d < 2) throw DomainError("heavy-traffic limit undefined for d = 1");
  double value = policy == Policy::sq ? 1.0 / std::log(static_cast<double>(d)) : 1.0 / (d - 1.0);
  if (scheme.scheme == Scheme::ism) value /= scheme.capacity_or_throw() + 1.0;
  return {AsymptoticResult::Kind::heavy_limit, value,
          to_string(policy) + "(" + std::to_string(d) + ")+" + scheme.label() + ", lambda->1", false};
}

// Exact cavity mean response for exponential jobs with mu = 1.
inline double cavity_mean_response_exp(Policy policy, const MemorySchemeSpec& scheme, double lambda) {
  const double p0 = pi0(scheme, lambda).pi0;
  return policy == Policy::sq ? sq_mean_response(scheme.d, lambda, 1.0, p0)
                              : ll_mean_response_exp(scheme.d, lambda, 1.0, p0);
}

inline std::vector<double> heavy_traffic_corroborate(Policy policy, const MemorySchemeSpec& scheme,
                                                     const std::vector<double>& lambdas) {
  std::vector<double> out;
  out.reserve(lambdas.size());
  double prev = 0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double l = lambdas[i];
    if (!(l > 0) || !(l < 1)) throw OutOfRange("heavy_traffic_corroborate: lambda must lie in (0, 1)");
    if (i > 0 && !(l > prev)) throw InvalidParameter("heavy_traffic_corroborate: lambdas must increase");
    prev = l;
    out.push_back(-cavity_mean_response_exp(policy, scheme, l) / std::log1p(-l));
  }
  return out;
}

// lim_{rho -> 0+} pi0(rho) for each scheme.
inline AsymptoticResult pi0_zero_load(const MemorySchemeSpec& scheme) {
  scheme.validate();
  const int d = scheme.d;
  double v = 1.0;
  switch (scheme.scheme) {
    case Scheme::none: v = 1.0; break;
    case Scheme::ip: v = 1.0 / d; break;
    case Scheme::cp: v = d >= 2 ? 0.0 : 1.0; break;
    case Scheme::bcp: v = (d >= 2 && scheme.capacity_or_throw() >= 1) ? 0.0 : 1.0; break;
    case Scheme::ism: v = 1.0 / (scheme.capacity_or_throw() + 1.0); break;
  }
  return {AsymptoticResult::Kind::pi0_zero_load, v, scheme.label() + " d=" + std::to_string(d) + ", rho->0", false};
}

// lim_{lambda -> 0+} of the waiting-time ratio (E[R1] - 1) / (E[R2] - 1) for
// exponential jobs with mean one. The leading terms are lambda^d pi0 for
// SQ(d) and lambda^d pi0 / d for LL(d), so
//   d1 < d2                 -> infinity (d1 > d2 -> 0)
//   same d, same policy     -> pi0_1 / pi0_2
//   same d, SQ vs LL        -> d pi0_1 / pi0_2 (LL vs SQ: pi0_1 / (d pi0_2))
// with pi0 limits from pi0_zero_load.
inline AsymptoticResult low_traffic_ratio(Policy p1, const MemorySchemeSpec& s1, Policy p2, const MemorySchemeSpec& s2) {
  s1.validate();
  s2.validate();
  const int d1 = s1.d, d2 = s2.d;
  const std::string regime =
      to_string(p1) + "(" + std::to_string(d1) + ")+" + s1.label() + " vs " + to_string(p2) + "(" + std::to_string(d2) + ")+" + s2.label();
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (d1 < d2) return {AsymptoticResult::Kind::low_ratio, inf, regime, false};
  if (d1 > d2) return {AsymptoticResult::Kind::low_ratio, 0.0, regime, true};

  const double a = pi0_zero_load(s1).value;
  const double b = pi0_zero_load(s2).value;
  double num = a, den = b;
  if (p1 == Policy::sq && p2 == Policy::ll) num *= d1;
  if (p1 == Policy::ll && p2 == Policy::sq) den *= d1;
  if (num == 0 && den == 0)
    throw DomainError("low-traffic ratio is indeterminate: both memories are almost never empty (" + regime + ")");
  const double v = den == 0 ? inf : num / den;
  return {AsymptoticResult::Kind::low_ratio, v, regime, p1 == Policy::ll && p2 == Policy::sq};
}

}  // namespace memlb
