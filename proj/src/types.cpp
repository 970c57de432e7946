#include "fab/types.hpp"

#include <algorithm>
#include <cctype>

namespace fab {

Norm parse_norm(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s == "l1") return Norm::L1;
  if (s == "l2") return Norm::L2;
  if (s == "linf") return Norm::LInf;
  throw ConfigError("unknown norm '" + name + "' (expected l1, l2 or linf)");
}

std::string norm_name(Norm p) {
  switch (p) {
    case Norm::L1: return "l1";
    case Norm::L2: return "l2";
    case Norm::LInf: return "linf";
  }
  return "?";
}

double lp_norm(const Eigen::Ref<const Vector>& v, Norm p) {
  switch (p) {
    case Norm::L1: return v.lpNorm<1>();
    case Norm::L2: return v.norm();
    case Norm::LInf: return v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

double lp_dual_norm(const Eigen::Ref<const Vector>& v, Norm p) {
  switch (p) {
    case Norm::L1: return v.lpNorm<Eigen::Infinity>();
    case Norm::L2: return v.norm();
    case Norm::LInf: return v.lpNorm<1>();
  }
  return 0.0;
}

}  // namespace fab
