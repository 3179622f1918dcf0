#pragma once

// Reference implementations used as independent oracles by the tests.

#include <cmath>
#include <vector>

#include <Eigen/Core>

namespace oracle {

struct LqSolution {
  std::vector<double> controls;
  std::vector<Eigen::Vector3d> states;
  double cost = 0.0;
};

// Finite-horizon discrete LQR with a goal offset, solved in absolute
// coordinates: V_k(s) = 1/2 s'P_k s + p_k's + c. Cost
//   sum_k 1/2 (s_k-g)'Wp(s_k-g) + 1/2 rho u_k^2 + 1/2 (s_N-g)'Wf(s_N-g).
inline LqSolution riccati(const Eigen::Matrix3d& A, const Eigen::Vector3d& B, const Eigen::Matrix3d& Wp,
                          const Eigen::Matrix3d& Wf, double rho, const Eigen::Vector3d& goal,
                          const Eigen::Vector3d& s0, int N) {
  std::vector<Eigen::RowVector3d> K(static_cast<std::size_t>(N));
  std::vector<double> kff(static_cast<std::size_t>(N));
  Eigen::Matrix3d P = Wf;
  Eigen::Vector3d p = -Wf * goal;
  for (int k = N - 1; k >= 0; --k) {
    const double Quu = rho + B.dot(P * B);
    const Eigen::RowVector3d Qus = B.transpose() * P * A;
    const double qu = B.dot(p);
    const Eigen::Matrix3d Qss = Wp + A.transpose() * P * A;
    const Eigen::Vector3d qs = -Wp * goal + A.transpose() * p;
    K[k] = -Qus / Quu;
    kff[k] = -qu / Quu;
    P = Qss - Qus.transpose() * Qus / Quu;
    p = qs - Qus.transpose() * (qu / Quu);
  }
  LqSolution out;
  Eigen::Vector3d s = s0;
  out.states.push_back(s);
  for (int k = 0; k < N; ++k) {
    const double u = K[k].dot(s) + kff[k];
    const Eigen::Vector3d e = s - goal;
    out.cost += 0.5 * (e.dot(Wp * e) + rho * u * u);
    out.controls.push_back(u);
    s = A * s + B * u;
    out.states.push_back(s);
  }
  const Eigen::Vector3d e = s - goal;
  out.cost += 0.5 * e.dot(Wf * e);
  return out;
}

}  // namespace oracle
