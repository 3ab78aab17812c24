#pragma once

// Weighted network Laplacian, its eigenstructure, nodal inertia and the
// generalized (inertia-weighted) Fiedler vector.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridgfv/case_model.hpp"
#include "gridgfv/error.hpp"
#include "gridgfv/powerflow.hpp"
#include "gridgfv/reduction.hpp"

namespace gridgfv {

/// Eigenvalues with magnitude at or below this fraction of the largest one
/// count as zero, in both the standard and the generalized problem.
inline constexpr double kZeroEigenRelTol = 1e-9;
/// Relative gap below which the second and third eigenvalues are flagged.
inline constexpr double kDegenerateRelTol = 1e-6;

struct LaplacianMatrix {
  Eigen::MatrixXd l;
  std::vector<BusId> bus_ids;
};

struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // columns, orthonormal
  int zero_multiplicity = 0;
};

struct FiedlerResult {
  double lambda2 = 0.0;
  Eigen::VectorXd vector;  // |phi_2| / max |phi_2|
  bool degenerate = false;
};

struct NodalInertiaVector {
  Eigen::VectorXd h;  // s, system base
  std::vector<BusId> bus_ids;
};

struct GeneralizedEigen {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // columns, N-orthonormal
  int zero_multiplicity = 0;
};

struct GfvResult {
  double dynamic_connectivity = 0.0;
  Eigen::VectorXd gfv;
  Eigen::VectorXd generalized_eigenvalues;
  bool degenerate = false;
};

inline int count_zero_eigenvalues(const Eigen::VectorXd& values) {
  if (values.size() == 0) return 0;
  double threshold = kZeroEigenRelTol * values.cwiseAbs().maxCoeff();
  return static_cast<int>((values.array().abs() <= threshold).count());
}

inline Eigen::VectorXd abs_max_normalized(const Eigen::VectorXd& v) {
  Eigen::VectorXd a = v.cwiseAbs();
  double m = a.maxCoeff();
  if (!(m > 0.0)) throw NumericalError("cannot normalize a zero vector");
  return a / m;
}

/// Angle difference wrapped to (-pi, pi].
inline double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

/// L(i,j) = -|V_i||V_j| B_ij cos(theta_i - theta_j) over in-service branches,
/// with B_ij the series susceptance summed over parallel branches; diagonal
/// is the negated off-diagonal row sum. Conductances are ignored.
inline LaplacianMatrix build_laplacian(const NetworkCase& net, const PowerFlowSolution& sol) {
  const auto n = static_cast<Eigen::Index>(net.bus_count());
  LaplacianMatrix out;
  out.l = Eigen::MatrixXd::Zero(n, n);
  for (const auto& b : net.buses) out.bus_ids.push_back(b.id);
  for (const auto& br : net.branches) {
    if (!br.in_service || br.from_bus == br.to_bus) continue;
    auto i = static_cast<Eigen::Index>(net.require_bus_index(br.from_bus));
    auto j = static_cast<Eigen::Index>(net.require_bus_index(br.to_bus));
    double dtheta = wrap_angle(sol.va(i) - sol.va(j));
    if (std::abs(dtheta) >= std::numbers::pi / 2) {
      throw NumericalError("branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                           ": angle difference outside the stability region (|dtheta| >= 90 deg)");
    }
    double b = -series_admittance(br).imag();
    double w = sol.vm(i) * sol.vm(j) * b * std::cos(dtheta);
    out.l(i, j) -= w;
    out.l(j, i) -= w;
    out.l(i, i) += w;
    out.l(j, j) += w;
  }
  return out;
}

inline SpectralDecomposition eigendecompose(const Eigen::MatrixXd& l) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
  SpectralDecomposition out;
  out.eigenvalues = es.eigenvalues();
  out.eigenvectors = es.eigenvectors();
  out.zero_multiplicity = count_zero_eigenvalues(out.eigenvalues);
  return out;
}

inline SpectralDecomposition eigendecompose(const LaplacianMatrix& l) { return eigendecompose(l.l); }

inline bool second_mode_degenerate(const Eigen::VectorXd& values) {
  if (values.size() < 3) return false;
  return std::abs(values(2) - values(1)) <= kDegenerateRelTol * std::abs(values(1));
}

inline FiedlerResult fiedler(const SpectralDecomposition& decomp) {
  if (decomp.eigenvalues.size() < 2) throw DataError("fiedler: need at least two nodes");
  if (decomp.zero_multiplicity != 1) {
    throw DataError("fiedler: network is disconnected (" + std::to_string(decomp.zero_multiplicity) +
                    " zero eigenvalues)");
  }
  FiedlerResult out;
  out.lambda2 = decomp.eigenvalues(1);
  out.vector = abs_max_normalized(decomp.eigenvectors.col(1));
  out.degenerate = second_mode_degenerate(decomp.eigenvalues);
  return out;
}

/// Nodal inertia at every network bus:
///   h_j = sum_k B_kj E_k cos(d_k - t_j) / sum_i H_i^-1 D_ji B_ij E_i cos(d_i - t_j)
/// `b_bus_gen(j, k)` is the equivalent bus-to-internal-node susceptance from
/// `bus_generator_susceptance`.
inline NodalInertiaVector nodal_inertia(const NetworkCase& net, const PowerFlowSolution& sol,
                                        const std::vector<InternalEmf>& emfs,
                                        const ParticipationMatrix& participation,
                                        const Eigen::MatrixXd& b_bus_gen) {
  const auto nb = static_cast<Eigen::Index>(net.bus_count());
  const auto ng = static_cast<Eigen::Index>(net.generator_count());
  if (static_cast<Eigen::Index>(emfs.size()) != ng || participation.d.rows() != nb ||
      participation.d.cols() != ng || b_bus_gen.rows() != nb || b_bus_gen.cols() != ng) {
    throw DataError("nodal_inertia: inconsistent dimensions between case and inputs");
  }
  NodalInertiaVector out;
  out.h.resize(nb);
  std::string bad;
  for (Eigen::Index j = 0; j < nb; ++j) {
    out.bus_ids.push_back(net.buses[static_cast<std::size_t>(j)].id);
    double num = 0.0, den = 0.0;
    for (Eigen::Index k = 0; k < ng; ++k) {
      const auto& e = emfs[static_cast<std::size_t>(k)];
      double coupling = b_bus_gen(j, k) * e.e_mag * std::cos(e.delta0 - sol.va(j));
      num += coupling;
      den += participation.d(j, k) * coupling / net.generators[static_cast<std::size_t>(k)].h;
    }
    if (!(std::abs(den) >= 1e-12)) {
      bad += (bad.empty() ? "" : ", ") + std::to_string(out.bus_ids.back());
      out.h(j) = 0.0;
      continue;
    }
    out.h(j) = num / den;
  }
  if (!bad.empty())
    throw NumericalError("nodal_inertia: vanishing denominator at bus(es) " + bad);
  return out;
}

/// Pencil (L, N) with N = diag(h), solved through M = N^-1/2 L N^-1/2.
inline GeneralizedEigen solve_gep(const Eigen::MatrixXd& l, const Eigen::VectorXd& h) {
  if (l.rows() != l.cols() || l.rows() != h.size())
    throw DataError("solve_gep: dimension mismatch between L and N");
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    if (!(h(i) > 0.0) || !std::isfinite(h(i)))
      throw DataError("solve_gep: inertia entry " + std::to_string(i) + " is not positive");
  }
  Eigen::VectorXd s = h.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd m = s.asDiagonal() * l * s.asDiagonal();
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("generalized eigensolver failed");
  GeneralizedEigen out;
  out.eigenvalues = es.eigenvalues();
  out.eigenvectors = s.asDiagonal() * es.eigenvectors();
  out.zero_multiplicity = count_zero_eigenvalues(out.eigenvalues);
  return out;
}

inline GeneralizedEigen solve_gep(const LaplacianMatrix& l, const NodalInertiaVector& n) {
  return solve_gep(l.l, n.h);
}

inline GfvResult gfv(const GeneralizedEigen& gep) {
  if (gep.eigenvalues.size() < 2) throw DataError("gfv: need at least two nodes");
  if (gep.zero_multiplicity != 1) {
    throw DataError("gfv: expected exactly one zero generalized eigenvalue, found " +
                    std::to_string(gep.zero_multiplicity) + " (disconnected network)");
  }
  GfvResult out;
  out.dynamic_connectivity = gep.eigenvalues(1);
  out.gfv = abs_max_normalized(gep.eigenvectors.col(1));
  out.generalized_eigenvalues = gep.eigenvalues;
  out.degenerate = second_mode_degenerate(gep.eigenvalues);
  return out;
}

}  // namespace gridgfv
