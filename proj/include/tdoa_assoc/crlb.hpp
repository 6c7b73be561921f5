#pragma once

#include <array>
#include <span>
#include <vector>

#include "tdoa_assoc/geometry.hpp"

namespace tdoa_assoc {

/// 3x3 Fisher information matrix for a source position under the Gaussian
/// TDOA model, units 1/m^2. Symmetric positive semidefinite.
struct FisherInfo {
  std::array<std::array<double, 3>, 3> J{};

  double trace() const { return J[0][0] + J[1][1] + J[2][2]; }
};

/// J = (1/sigma^2) * sum over pairs of g g^T with
/// g = (s - r_k)/|s - r_k| - (s - r_l)/|s - r_l|.
FisherInfo fisher_information(const Point3& source, std::span<const ReceiverPair> pairs,
                              std::span<const Point3> receivers, double sigma);

/// sqrt(trace(J^{-1})) in meters; +inf when J is singular or its condition
/// number exceeds 1e12. The inverse uses the explicit 3x3 adjugate.
double root_crlb(const Point3& source, std::span<const ReceiverPair> pairs,
                 std::span<const Point3> receivers, double sigma);
double root_crlb(const FisherInfo& info);

/// Eigenvalues of a symmetric 3x3 matrix, ascending (trigonometric closed
/// form). Used for the condition-number screen.
std::array<double, 3> symmetric_eigenvalues(const FisherInfo& info);

}  // namespace tdoa_assoc
