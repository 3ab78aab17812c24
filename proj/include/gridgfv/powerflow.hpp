#pragma once

// AC power flow (polar Newton-Raphson) and classical-model internal EMFs.

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridgfv/case_model.hpp"
#include "gridgfv/error.hpp"

namespace gridgfv {

using cplx = std::complex<double>;

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 20;
};

struct PowerFlowSolution {
  std::vector<BusId> bus_ids;
  Eigen::VectorXd vm;
  Eigen::VectorXd va;  // rad, slack = 0
  Eigen::VectorXd p_inj;
  Eigen::VectorXd q_inj;
  int iterations = 0;
  double max_mismatch = 0.0;
};

struct InternalEmf {
  double e_mag = 0.0;
  double delta0 = 0.0;  // rad, slack referenced
};

/// Series admittance of a branch.
inline cplx series_admittance(const Branch& br) { return 1.0 / cplx(br.r, br.x); }

/// Bus admittance matrix in `net.buses` order. Out-of-service branches are skipped.
inline Eigen::MatrixXcd build_ybus(const NetworkCase& net) {
  const auto n = static_cast<Eigen::Index>(net.bus_count());
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    y(i, i) += cplx(b.g_shunt, b.b_shunt);
  }
  for (const auto& br : net.branches) {
    if (!br.in_service) continue;
    auto f = static_cast<Eigen::Index>(net.require_bus_index(br.from_bus));
    auto t = static_cast<Eigen::Index>(net.require_bus_index(br.to_bus));
    cplx ys = series_admittance(br);
    cplx half_ch(0.0, 0.5 * br.b_ch);
    y(f, f) += ys + half_ch;
    y(t, t) += ys + half_ch;
    y(f, t) -= ys;
    y(t, f) -= ys;
  }
  return y;
}

/// Complex power injections S = V .* conj(Y V).
inline Eigen::VectorXcd power_injections(const Eigen::MatrixXcd& ybus, const Eigen::VectorXd& vm,
                                         const Eigen::VectorXd& va) {
  Eigen::VectorXcd v(vm.size());
  for (Eigen::Index i = 0; i < vm.size(); ++i) v(i) = std::polar(vm(i), va(i));
  Eigen::VectorXcd current = ybus * v;
  return v.cwiseProduct(current.conjugate());
}

/// Scheduled net active injection per bus (generation minus load).
inline Eigen::VectorXd scheduled_p(const NetworkCase& net) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(net.bus_count()));
  for (std::size_t i = 0; i < net.bus_count(); ++i) p(static_cast<Eigen::Index>(i)) = -net.buses[i].p_load;
  for (const auto& g : net.generators) p(static_cast<Eigen::Index>(net.require_bus_index(g.bus))) += g.p_gen;
  return p;
}

inline PowerFlowSolution solve_powerflow(const NetworkCase& net, const PowerFlowOptions& opt = {}) {
  const auto n = static_cast<Eigen::Index>(net.bus_count());
  if (n == 0) throw DataError("power flow: case has no buses");

  std::vector<Eigen::Index> pvpq, pq;
  Eigen::Index slack = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (net.buses[static_cast<std::size_t>(i)].kind) {
      case BusKind::slack:
        if (slack >= 0) throw DataError("power flow: more than one slack bus");
        slack = i;
        break;
      case BusKind::pv: pvpq.push_back(i); break;
      case BusKind::pq:
        pvpq.push_back(i);
        pq.push_back(i);
        break;
    }
  }
  if (slack < 0) throw DataError("power flow: no slack bus");

  const Eigen::MatrixXcd ybus = build_ybus(net);
  const Eigen::VectorXd p_spec = scheduled_p(net);

  PowerFlowSolution sol;
  sol.vm = Eigen::VectorXd::Ones(n);
  sol.va = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = net.buses[static_cast<std::size_t>(i)];
    sol.bus_ids.push_back(b.id);
    if (b.kind != BusKind::pq) sol.vm(i) = b.v_set;
  }

  const auto npvpq = static_cast<Eigen::Index>(pvpq.size());
  const auto npq = static_cast<Eigen::Index>(pq.size());
  const Eigen::Index dim = npvpq + npq;

  Eigen::VectorXd mismatch(dim);
  for (int iter = 0;; ++iter) {
    Eigen::VectorXcd s = power_injections(ybus, sol.vm, sol.va);
    for (Eigen::Index k = 0; k < npvpq; ++k) mismatch(k) = p_spec(pvpq[k]) - s(pvpq[k]).real();
    for (Eigen::Index k = 0; k < npq; ++k) {
      auto i = pq[static_cast<std::size_t>(k)];
      mismatch(npvpq + k) = -net.buses[static_cast<std::size_t>(i)].q_load - s(i).imag();
    }
    sol.max_mismatch = dim > 0 ? mismatch.cwiseAbs().maxCoeff() : 0.0;
    sol.iterations = iter;
    if (!std::isfinite(sol.max_mismatch))
      throw NumericalError("power flow diverged (non-finite mismatch) at iteration " + std::to_string(iter));
    if (sol.max_mismatch <= opt.tol) {
      sol.p_inj = s.real();
      sol.q_inj = s.imag();
      return sol;
    }
    if (iter >= opt.max_iter) {
      throw NumericalError("power flow did not converge in " + std::to_string(opt.max_iter) +
                           " iterations (max mismatch " + std::to_string(sol.max_mismatch) + " pu)");
    }

    Eigen::VectorXcd v(n), vnorm(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      v(i) = std::polar(sol.vm(i), sol.va(i));
      vnorm(i) = std::polar(1.0, sol.va(i));
    }
    const Eigen::VectorXcd ibus = ybus * v;
    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    Eigen::MatrixXcd ds_dva = -(ybus * v.asDiagonal());
    ds_dva.diagonal() += ibus;
    ds_dva = (cplx(0.0, 1.0) * v).asDiagonal() * ds_dva.conjugate();
    Eigen::MatrixXcd ds_dvm = v.asDiagonal() * (ybus * vnorm.asDiagonal()).conjugate();
    ds_dvm.diagonal() += ibus.conjugate().cwiseProduct(vnorm);

    Eigen::MatrixXd jac(dim, dim);
    for (Eigen::Index r = 0; r < npvpq; ++r) {
      for (Eigen::Index c = 0; c < npvpq; ++c) jac(r, c) = ds_dva(pvpq[r], pvpq[c]).real();
      for (Eigen::Index c = 0; c < npq; ++c) jac(r, npvpq + c) = ds_dvm(pvpq[r], pq[c]).real();
    }
    for (Eigen::Index r = 0; r < npq; ++r) {
      for (Eigen::Index c = 0; c < npvpq; ++c) jac(npvpq + r, c) = ds_dva(pq[r], pvpq[c]).imag();
      for (Eigen::Index c = 0; c < npq; ++c) jac(npvpq + r, npvpq + c) = ds_dvm(pq[r], pq[c]).imag();
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    if (!(lu.rcond() > 1e-14))
      throw NumericalError("power flow Jacobian is singular at iteration " + std::to_string(iter) +
                           " (ill-conditioned operating point)");
    Eigen::VectorXd dx = lu.solve(mismatch);
    for (Eigen::Index k = 0; k < npvpq; ++k) sol.va(pvpq[k]) += dx(k);
    for (Eigen::Index k = 0; k < npq; ++k) sol.vm(pq[k]) += dx(npvpq + k);
    for (auto i : pq) {
      if (!(sol.vm(i) > 0.0))
        throw NumericalError("power flow produced a non-positive voltage magnitude at bus " +
                             std::to_string(net.buses[static_cast<std::size_t>(i)].id));
    }
  }
}

/// Complex output of each generator at the solved point. Total bus generation
/// is the realized injection plus load; the part not fixed by scheduled
/// p_gen, and all reactive output, is shared in proportion to mva_base.
inline std::vector<cplx> generator_outputs(const NetworkCase& net, const PowerFlowSolution& sol) {
  const std::size_t nb = net.bus_count();
  std::vector<double> p_sched(nb, 0.0), rating(nb, 0.0);
  for (const auto& g : net.generators) {
    auto i = net.require_bus_index(g.bus);
    p_sched[i] += g.p_gen;
    rating[i] += g.mva_base;
  }
  std::vector<cplx> out;
  out.reserve(net.generator_count());
  for (const auto& g : net.generators) {
    auto i = net.require_bus_index(g.bus);
    auto ii = static_cast<Eigen::Index>(i);
    double p_total = sol.p_inj(ii) + net.buses[i].p_load;
    double q_total = sol.q_inj(ii) + net.buses[i].q_load;
    double share = g.mva_base / rating[i];
    out.emplace_back(g.p_gen + share * (p_total - p_sched[i]), share * q_total);
  }
  return out;
}

/// E∠δ = V∠θ + j x'd I with I = conj(S / V) for each generator.
inline std::vector<InternalEmf> internal_emfs(const NetworkCase& net, const PowerFlowSolution& sol) {
  auto outputs = generator_outputs(net, sol);
  std::vector<InternalEmf> emfs;
  emfs.reserve(outputs.size());
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const auto& g = net.generators[k];
    auto i = static_cast<Eigen::Index>(net.require_bus_index(g.bus));
    if (!(sol.vm(i) > 0.0))
      throw NumericalError("internal EMF: zero terminal voltage at bus " + std::to_string(g.bus));
    cplx v = std::polar(sol.vm(i), sol.va(i));
    cplx current = std::conj(outputs[k] / v);
    cplx e = v + cplx(0.0, g.xd_p) * current;
    emfs.push_back({std::abs(e), std::arg(e)});
  }
  return emfs;
}

}  // namespace gridgfv
