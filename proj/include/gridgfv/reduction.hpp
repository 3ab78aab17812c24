#pragma once

// Generator internal nodes, Kron reduction and the frequency participation
// (frequency divider) matrix.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridgfv/case_model.hpp"
#include "gridgfv/error.hpp"
#include "gridgfv/powerflow.hpp"

namespace gridgfv {

/// Admittance over network buses followed by one internal node per generator.
/// Rows [0, n_bus) are buses in case order; row n_bus + k is generator k.
struct AugmentedAdmittance {
  Eigen::MatrixXcd matrix;
  std::vector<BusId> bus_ids;
  std::vector<int> generator_ids;
  std::vector<Eigen::Index> terminal;  // bus row of each generator

  Eigen::Index n_bus() const { return static_cast<Eigen::Index>(bus_ids.size()); }
  Eigen::Index n_gen() const { return static_cast<Eigen::Index>(generator_ids.size()); }
  Eigen::Index internal_node(Eigen::Index k) const { return n_bus() + k; }
};

/// Rows: network buses. Columns: generators.
struct ParticipationMatrix {
  Eigen::MatrixXd d;
  std::vector<BusId> bus_ids;
  std::vector<int> generator_ids;
};

inline constexpr double kMinTransientReactance = 1e-4;

inline AugmentedAdmittance augment_internal_nodes(const Eigen::MatrixXcd& ybus, const NetworkCase& net) {
  const auto nb = static_cast<Eigen::Index>(net.bus_count());
  const auto ng = static_cast<Eigen::Index>(net.generator_count());
  if (ybus.rows() != nb || ybus.cols() != nb)
    throw DataError("augment_internal_nodes: ybus dimension does not match the case");

  AugmentedAdmittance aug;
  aug.matrix = Eigen::MatrixXcd::Zero(nb + ng, nb + ng);
  aug.matrix.topLeftCorner(nb, nb) = ybus;
  for (const auto& b : net.buses) aug.bus_ids.push_back(b.id);
  for (Eigen::Index k = 0; k < ng; ++k) {
    const auto& g = net.generators[static_cast<std::size_t>(k)];
    if (!(g.xd_p > 0.0)) {
      throw DataError("generator " + std::to_string(g.id) +
                      ": transient reactance must be positive to form an internal node "
                      "(use at least " + std::to_string(kMinTransientReactance) + " pu)");
    }
    auto t = static_cast<Eigen::Index>(net.require_bus_index(g.bus));
    cplx y = 1.0 / cplx(0.0, g.xd_p);
    Eigen::Index node = nb + k;
    aug.matrix(node, node) += y;
    aug.matrix(t, t) += y;
    aug.matrix(node, t) -= y;
    aug.matrix(t, node) -= y;
    aug.generator_ids.push_back(g.id);
    aug.terminal.push_back(t);
  }
  return aug;
}

/// Schur complement of `y` onto the nodes in `keep` (output ordered as `keep`).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> kron_reduce(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& y, std::span<const Eigen::Index> keep) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = y.rows();
  std::vector<bool> kept(static_cast<std::size_t>(n), false);
  for (auto k : keep) {
    if (k < 0 || k >= n) throw DataError("kron_reduce: kept node index out of range");
    if (kept[static_cast<std::size_t>(k)]) throw DataError("kron_reduce: duplicate kept node");
    kept[static_cast<std::size_t>(k)] = true;
  }
  std::vector<Eigen::Index> keep_v(keep.begin(), keep.end());
  std::vector<Eigen::Index> elim;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!kept[static_cast<std::size_t>(i)]) elim.push_back(i);

  Mat ykk = y(keep_v, keep_v);
  if (elim.empty()) return ykk;

  Mat yee = y(elim, elim);
  Eigen::PartialPivLU<Mat> lu(yee);
  if (!(lu.rcond() > 1e-13))
    throw NumericalError("kron_reduce: eliminated block is singular (isolated eliminated subnetwork)");
  Mat yke = y(keep_v, elim);
  Mat yek = y(elim, keep_v);
  return ykk - yke * lu.solve(yek);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> kron_reduce(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& y, const std::vector<Eigen::Index>& keep) {
  return kron_reduce<Scalar>(y, std::span<const Eigen::Index>(keep));
}

/// D = -B_ext^{-1} B_g with B_ext the bus-bus susceptance block (generator
/// reactances included on its diagonal) and B_g the bus-to-internal-node block.
inline ParticipationMatrix frequency_participation(const AugmentedAdmittance& aug) {
  const auto nb = aug.n_bus();
  const auto ng = aug.n_gen();
  Eigen::MatrixXd b_ext = aug.matrix.topLeftCorner(nb, nb).imag();
  Eigen::MatrixXd b_g = aug.matrix.topRightCorner(nb, ng).imag();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(b_ext);
  if (!(lu.rcond() > 1e-13)) throw NumericalError("frequency_participation: B_ext is singular");
  ParticipationMatrix out;
  out.d = -lu.solve(b_g);
  out.bus_ids = aug.bus_ids;
  out.generator_ids = aug.generator_ids;
  return out;
}

/// Equivalent susceptance between every bus j and every generator internal
/// node k: Im(Y_red_j)(k, j), where Y_red_j retains bus j and all internal
/// nodes. Rows: buses, columns: generators.
inline Eigen::MatrixXd bus_generator_susceptance(const AugmentedAdmittance& aug) {
  const auto nb = aug.n_bus();
  const auto ng = aug.n_gen();
  Eigen::MatrixXd out(nb, ng);
  std::vector<Eigen::Index> keep(static_cast<std::size_t>(ng) + 1);
  for (Eigen::Index j = 0; j < nb; ++j) {
    keep[0] = j;
    for (Eigen::Index k = 0; k < ng; ++k) keep[static_cast<std::size_t>(k) + 1] = aug.internal_node(k);
    Eigen::MatrixXcd yred = kron_reduce<cplx>(aug.matrix, keep);
    for (Eigen::Index k = 0; k < ng; ++k) out(j, k) = yred(k + 1, 0).imag();
  }
  return out;
}

}  // namespace gridgfv
