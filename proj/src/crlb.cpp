#include "tdoa_assoc/crlb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tdoa_assoc {

namespace {
constexpr double kMinSourceReceiverDistance = 1e-9;
constexpr double kMaxCondition = 1e12;
}  // namespace

FisherInfo fisher_information(const Point3& source, std::span<const ReceiverPair> pairs,
                              std::span<const Point3> receivers, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("fisher_information: sigma must be positive");
  for (const Point3& r : receivers)
    if (distance(source, r) < kMinSourceReceiverDistance)
      throw std::invalid_argument("fisher_information: source coincides with a receiver");

  FisherInfo info;
  for (const ReceiverPair& p : pairs) {
    const Point3 dk = source - receivers[static_cast<std::size_t>(p.k)];
    const Point3 dl = source - receivers[static_cast<std::size_t>(p.l)];
    const double nk = dk.norm();
    const double nl = dl.norm();
    const double g[3] = {dk.x / nk - dl.x / nl, dk.y / nk - dl.y / nl, dk.z / nk - dl.z / nl};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) info.J[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] += g[a] * g[b];
  }
  const double w = 1.0 / (sigma * sigma);
  for (auto& row : info.J)
    for (double& v : row) v *= w;
  return info;
}

std::array<double, 3> symmetric_eigenvalues(const FisherInfo& info) {
  const auto& J = info.J;
  const double p1 = J[0][1] * J[0][1] + J[0][2] * J[0][2] + J[1][2] * J[1][2];
  const double q = info.trace() / 3.0;
  if (p1 == 0.0) {
    std::array<double, 3> eig{J[0][0], J[1][1], J[2][2]};
    std::sort(eig.begin(), eig.end());
    return eig;
  }
  const double p2 = (J[0][0] - q) * (J[0][0] - q) + (J[1][1] - q) * (J[1][1] - q) +
                    (J[2][2] - q) * (J[2][2] - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  // B = (J - q I) / p
  double B[3][3];
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      B[a][b] = (J[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] - (a == b ? q : 0.0)) / p;
  const double detB = B[0][0] * (B[1][1] * B[2][2] - B[1][2] * B[2][1]) -
                      B[0][1] * (B[1][0] * B[2][2] - B[1][2] * B[2][0]) +
                      B[0][2] * (B[1][0] * B[2][1] - B[1][1] * B[2][0]);
  const double r = std::clamp(detB / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double two_pi_3 = 2.0943951023931953;
  const double e1 = q + 2.0 * p * std::cos(phi);
  const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * two_pi_3);
  const double e2 = 3.0 * q - e1 - e3;
  std::array<double, 3> eig{e3, e2, e1};
  std::sort(eig.begin(), eig.end());
  return eig;
}

double root_crlb(const FisherInfo& info) {
  const auto eig = symmetric_eigenvalues(info);
  const double lo = eig[0];
  const double hi = eig[2];
  if (!(lo > 0.0) || hi / lo > kMaxCondition) return std::numeric_limits<double>::infinity();

  // trace of the inverse via the explicit adjugate
  const auto& J = info.J;
  const double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                     J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                     J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
  if (!(det > 0.0)) return std::numeric_limits<double>::infinity();
  const double adj00 = J[1][1] * J[2][2] - J[1][2] * J[2][1];
  const double adj11 = J[0][0] * J[2][2] - J[0][2] * J[2][0];
  const double adj22 = J[0][0] * J[1][1] - J[0][1] * J[1][0];
  return std::sqrt((adj00 + adj11 + adj22) / det);
}

double root_crlb(const Point3& source, std::span<const ReceiverPair> pairs,
                 std::span<const Point3> receivers, double sigma) {
  return root_crlb(fisher_information(source, pairs, receivers, sigma));
}

}  // namespace tdoa_assoc
