#pragma once

#include <string>
#include <string_view>

#include "memlb/errors.hpp"

namespace memlb {

// SQ(d): shortest queue among d probes. LL(d): least remaining work among d probes.
enum class Policy { sq, ll };

inline std::string to_string(Policy p) { return p == Policy::sq ? "sq" : "ll"; }

inline Policy parse_policy(std::string_view name) {
  if (name == "sq") return Policy::sq;
  if (name == "ll") return Policy::ll;
  throw InvalidParameter("unknown policy '" + std::string(name) + "' (expected sq or ll)");
}

}  // namespace memlb
