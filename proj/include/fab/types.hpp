#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace fab {

using Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorF = Eigen::VectorXf;
using MatrixF = Eigen::MatrixXf;

/// The three perturbation norms the toolkit supports.
enum class Norm { L1, L2, LInf };

/// Parses "l1" / "l2" / "linf" (case-insensitive). Throws ConfigError otherwise.
Norm parse_norm(const std::string& name);
std::string norm_name(Norm p);

double lp_norm(const Eigen::Ref<const Vector>& v, Norm p);

/// Norm of the dual exponent q, 1/p + 1/q = 1. Used for point-to-plane
/// distances: d_p(x, pi) = |<w,x>+b| / ||w||_q.
double lp_dual_norm(const Eigen::Ref<const Vector>& v, Norm p);

/// Error categories. The CLI maps each to a distinct exit code.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fab
