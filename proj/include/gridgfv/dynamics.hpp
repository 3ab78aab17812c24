#pragma once

// Linearized swing dynamics over generator internal nodes, OU wind-speed
// paths, the cubic wind-to-power map and the homogeneous closed-form response.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridgfv/case_model.hpp"
#include "gridgfv/error.hpp"
#include "gridgfv/powerflow.hpp"
#include "gridgfv/reduction.hpp"
#include "gridgfv/spectral.hpp"

namespace gridgfv {

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream): both words go through seed_seq, so
/// neighbouring streams are decorrelated.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

struct OuParams {
  double mu = 14.0;     // m/s
  double alpha = 0.1;   // 1/s
  double b = 0.099;     // m/s per sqrt(s)
  double dt = 0.01;     // s
  std::uint64_t seed = 0;
};

inline void check(const OuParams& p) {
  if (!(p.alpha > 0.0)) throw DataError("OU alpha must be positive");
  if (!(p.dt > 0.0)) throw DataError("OU dt must be positive");
  if (!(p.b >= 0.0)) throw DataError("OU diffusion b must be non-negative");
}

/// Exact discretization, eta_0 = mu:
///   eta_{k+1} = mu + (eta_k - mu) e^{-alpha dt} + b sqrt((1 - e^{-2 alpha dt}) / (2 alpha)) xi_k
inline std::vector<double> simulate_ou(const OuParams& p, std::size_t n_steps, Rng& rng) {
  check(p);
  if (n_steps < 1) throw DataError("simulate_ou: n_steps must be at least 1");
  const double decay = std::exp(-p.alpha * p.dt);
  const double scale = p.b * std::sqrt((1.0 - decay * decay) / (2.0 * p.alpha));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eta(n_steps);
  eta[0] = p.mu;
  for (std::size_t k = 1; k < n_steps; ++k) eta[k] = p.mu + (eta[k - 1] - p.mu) * decay + scale * normal(rng);
  return eta;
}

inline std::vector<double> simulate_ou(const OuParams& p, std::size_t n_steps) {
  Rng rng = make_rng(p.seed);
  return simulate_ou(p, n_steps, rng);
}

struct TurbineParams {
  double rated_power = 1.0;  // pu on system base
  double v_rated = 15.0;     // m/s
  double v_ref = 14.0;       // m/s, operating point of the linearization
};

inline double turbine_power(double v, const TurbineParams& t) {
  double ratio = v / t.v_rated;
  return t.rated_power * std::clamp(ratio * ratio * ratio, 0.0, 1.0);
}

/// dP_k = P(v_k) - P(v_ref), P(v) = rated * clamp((v / v_rated)^3, 0, 1).
inline std::vector<double> wind_to_power(std::span<const double> v, const TurbineParams& t) {
  if (!(t.v_rated > 0.0)) throw DataError("wind_to_power: v_rated must be positive");
  const double p_ref = turbine_power(t.v_ref, t);
  std::vector<double> dp(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) dp[k] = turbine_power(v[k], t) - p_ref;
  return dp;
}

/// M dw/dt = K dP - D w - L_red theta,  dtheta/dt = omega_s w
/// over generator internal nodes; bus frequencies are participation * w.
struct SwingModel {
  Eigen::VectorXd m;        // 2H, s
  Eigen::VectorXd damp;     // pu
  Eigen::VectorXd h;        // s
  Eigen::MatrixXd l_red;    // n_gen x n_gen
  Eigen::MatrixXd injection;  // n_gen x n_bus; column b spreads an injection at bus b
  ParticipationMatrix participation;  // n_bus x n_gen
  double omega_s = 2.0 * std::numbers::pi * 60.0;

  std::vector<BusId> bus_ids() const { return participation.bus_ids; }
  Eigen::Index n_gen() const { return m.size(); }
  Eigen::Index n_bus() const { return participation.d.rows(); }

  Eigen::Index bus_column(BusId id) const {
    for (std::size_t i = 0; i < participation.bus_ids.size(); ++i)
      if (participation.bus_ids[i] == id) return static_cast<Eigen::Index>(i);
    throw DataError("bus " + std::to_string(id) + " is not part of the swing model");
  }
};

struct SwingOptions {
  double default_damping = 1.0;  // pu, used where a generator has no `d`
  double f_nominal = 60.0;       // Hz
};

/// Synchronizing-coefficient Laplacian over buses followed by generator
/// internal nodes at the given operating point.
inline Eigen::MatrixXd augmented_laplacian(const NetworkCase& net, const PowerFlowSolution& sol,
                                           const std::vector<InternalEmf>& emfs) {
  const auto nb = static_cast<Eigen::Index>(net.bus_count());
  const auto ng = static_cast<Eigen::Index>(net.generator_count());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(nb + ng, nb + ng);
  l.topLeftCorner(nb, nb) = build_laplacian(net, sol).l;
  for (Eigen::Index k = 0; k < ng; ++k) {
    const auto& g = net.generators[static_cast<std::size_t>(k)];
    if (!(g.xd_p > 0.0)) throw DataError("generator " + std::to_string(g.id) + ": xd_p must be positive");
    auto t = static_cast<Eigen::Index>(net.require_bus_index(g.bus));
    const auto& e = emfs[static_cast<std::size_t>(k)];
    double dtheta = wrap_angle(e.delta0 - sol.va(t));
    if (std::abs(dtheta) >= std::numbers::pi / 2)
      throw NumericalError("generator " + std::to_string(g.id) + ": rotor angle outside the stability region");
    double w = e.e_mag * sol.vm(t) / g.xd_p * std::cos(dtheta);
    Eigen::Index node = nb + k;
    l(node, node) += w;
    l(t, t) += w;
    l(node, t) -= w;
    l(t, node) -= w;
  }
  return l;
}

inline SwingModel build_swing_model(const NetworkCase& net, const PowerFlowSolution& sol,
                                    const std::vector<InternalEmf>& emfs, const SwingOptions& opt = {}) {
  const auto nb = static_cast<Eigen::Index>(net.bus_count());
  const auto ng = static_cast<Eigen::Index>(net.generator_count());
  if (static_cast<Eigen::Index>(emfs.size()) != ng) throw DataError("build_swing_model: one EMF per generator required");

  SwingModel model;
  model.omega_s = 2.0 * std::numbers::pi * opt.f_nominal;
  model.m.resize(ng);
  model.damp.resize(ng);
  model.h.resize(ng);
  for (Eigen::Index k = 0; k < ng; ++k) {
    const auto& g = net.generators[static_cast<std::size_t>(k)];
    model.h(k) = g.h;
    model.m(k) = 2.0 * g.h;
    model.damp(k) = g.d.value_or(opt.default_damping);
  }

  Eigen::MatrixXd l = augmented_laplacian(net, sol, emfs);
  std::vector<Eigen::Index> internal(static_cast<std::size_t>(ng));
  for (Eigen::Index k = 0; k < ng; ++k) internal[static_cast<std::size_t>(k)] = nb + k;
  model.l_red = kron_reduce<double>(l, internal);
  model.l_red = 0.5 * (model.l_red + model.l_red.transpose());

  // Bus angles follow from the algebraic balance L_BB theta_B + L_BG theta_G = dP_B,
  // so an injection reaches the rotors through K = -L_GB L_BB^-1.
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(l.topLeftCorner(nb, nb));
  if (!(lu.rcond() > 1e-13)) throw NumericalError("build_swing_model: bus Laplacian block is singular");
  model.injection = -lu.solve(l.topRightCorner(nb, ng)).transpose();

  model.participation = frequency_participation(augment_internal_nodes(build_ybus(net), net));
  return model;
}

/// Model in which every node is both a rotor and an observed bus (identity
/// participation and injection maps). Bus ids are 1..n.
inline SwingModel nodal_swing_model(const Eigen::MatrixXd& l, const Eigen::VectorXd& m, const Eigen::VectorXd& damp,
                                    double omega_s) {
  const auto n = l.rows();
  if (l.cols() != n || m.size() != n || damp.size() != n) throw DataError("nodal_swing_model: dimension mismatch");
  SwingModel model;
  model.m = m;
  model.damp = damp;
  model.h = m / 2.0;
  model.l_red = l;
  model.injection = Eigen::MatrixXd::Identity(n, n);
  model.participation.d = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    model.participation.bus_ids.push_back(static_cast<BusId>(i + 1));
    model.participation.generator_ids.push_back(static_cast<int>(i + 1));
  }
  model.omega_s = omega_s;
  return model;
}

struct Trajectory {
  Eigen::VectorXd t;
  Eigen::VectorXd dp;
  Eigen::MatrixXd gen_freq;  // samples x generators, pu deviation
  Eigen::MatrixXd bus_freq;  // samples x buses, pu deviation
  Eigen::VectorXd coi_freq;
};

/// One classical RK4 step of the LTI system x' = A x + B u with u held
/// constant over the step, folded into x_{k+1} = Phi x_k + Gamma u_k.
struct Rk4Propagator {
  Eigen::MatrixXd phi;
  Eigen::VectorXd gamma;

  Rk4Propagator(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double dt) {
    const auto n = a.rows();
    Eigen::MatrixXd ha = dt * a;
    Eigen::MatrixXd ha2 = ha * ha;
    Eigen::MatrixXd ha3 = ha2 * ha;
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    phi = id + ha + ha2 / 2.0 + ha3 / 6.0 + ha3 * ha / 24.0;
    gamma = dt * (id + ha / 2.0 + ha2 / 6.0 + ha3 / 24.0) * b;
  }
};

/// Integrates the model from rest with dp[k] applied over [t_k, t_k + dt).
/// Sample k holds the state at t_k = k dt.
inline Trajectory simulate(const SwingModel& model, BusId injection_bus, std::span<const double> dp, double dt) {
  if (!(dt > 0.0)) throw DataError("simulate: dt must be positive");
  if (dp.empty()) throw DataError("simulate: empty injection series");
  const auto ng = model.n_gen();
  const auto ns = static_cast<Eigen::Index>(dp.size());
  const Eigen::Index col = model.bus_column(injection_bus);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * ng, 2 * ng);
  Eigen::VectorXd minv = model.m.cwiseInverse();
  a.topLeftCorner(ng, ng).diagonal() = -minv.cwiseProduct(model.damp);
  a.topRightCorner(ng, ng) = -(minv.asDiagonal() * model.l_red);
  a.bottomLeftCorner(ng, ng) = model.omega_s * Eigen::MatrixXd::Identity(ng, ng);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * ng);
  b.head(ng) = minv.cwiseProduct(model.injection.col(col));
  const Rk4Propagator step(a, b, dt);

  Trajectory tr;
  tr.t = Eigen::VectorXd::LinSpaced(ns, 0.0, dt * static_cast<double>(ns - 1));
  tr.dp = Eigen::Map<const Eigen::VectorXd>(dp.data(), ns);
  tr.gen_freq.resize(ns, ng);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * ng);
  Eigen::VectorXd next(2 * ng);
  for (Eigen::Index k = 0; k < ns; ++k) {
    tr.gen_freq.row(k) = x.head(ng).transpose();
    if (k + 1 == ns) break;
    next.noalias() = step.phi * x;
    next += step.gamma * dp[static_cast<std::size_t>(k)];
    if (!next.allFinite()) {
      throw NumericalError("simulate: non-finite state at t = " + std::to_string(tr.t(k + 1)) +
                           " s (linear model unstable)");
    }
    x.swap(next);
  }
  tr.bus_freq = tr.gen_freq * model.participation.d.transpose();
  tr.coi_freq = tr.gen_freq * model.h / model.h.sum();
  return tr;
}

/// Frequency response at every node of a homogeneous network (uniform m and
/// d) to a step dP applied at node `disturbance` at t = 0:
///   df_i(t) = dP e^{-g t/2} / m * sum_a phi_ai phi_ab sin(W_a t) / W_a,
///   W_a^2 = lambda_a omega_s / m - g^2 / 4,  g = d / m.
/// Negative W_a^2 continues to sinh; W_a^2 = 0 gives t. With omega_s = 1 the
/// node variable is the angle rate itself.
inline Eigen::MatrixXd closed_form_response(const Eigen::MatrixXd& l_red, const Eigen::VectorXd& m,
                                            const Eigen::VectorXd& d, Eigen::Index disturbance, double dp_magnitude,
                                            std::span<const double> t_grid, double omega_s = 1.0) {
  const auto n = l_red.rows();
  if (m.size() != n || d.size() != n) throw DataError("closed_form_response: dimension mismatch");
  if (disturbance < 0 || disturbance >= n) throw DataError("closed_form_response: disturbance node out of range");
  auto uniform = [](const Eigen::VectorXd& v) {
    return (v.array() - v(0)).abs().maxCoeff() <= 1e-12 * std::abs(v(0));
  };
  if (!uniform(m) || !uniform(d))
    throw DataError("closed_form_response: inertia and damping must be identical at every node");
  const double mm = m(0);
  if (!(mm > 0.0)) throw DataError("closed_form_response: inertia must be positive");
  const double gamma = d(0) / mm;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (l_red + l_red.transpose()));
  const Eigen::VectorXd& lambda = es.eigenvalues();
  const Eigen::MatrixXd& phi = es.eigenvectors();

  Eigen::MatrixXd out(static_cast<Eigen::Index>(t_grid.size()), n);
  Eigen::VectorXd modal(n);
  for (std::size_t s = 0; s < t_grid.size(); ++s) {
    const double t = t_grid[s];
    for (Eigen::Index a = 0; a < n; ++a) {
      const double w2 = lambda(a) * omega_s / mm - gamma * gamma / 4.0;
      double damped;  // e^{-g t/2} * S_a(t)
      if (w2 > 0.0) {
        double w = std::sqrt(w2);
        damped = std::exp(-gamma * t / 2.0) * std::sin(w * t) / w;
      } else if (w2 < 0.0) {
        double kappa = std::sqrt(-w2);
        damped = (std::exp((kappa - gamma / 2.0) * t) - std::exp(-(kappa + gamma / 2.0) * t)) / (2.0 * kappa);
      } else {
        damped = std::exp(-gamma * t / 2.0) * t;
      }
      modal(a) = damped * phi(disturbance, a);
    }
    out.row(static_cast<Eigen::Index>(s)) = (dp_magnitude / mm) * (phi * modal).transpose();
  }
  return out;
}

}  // namespace gridgfv
