#pragma once

// Operating point through to GFV in one call.

#include <string>
#include <vector>

#include "gridgfv/case_model.hpp"
#include "gridgfv/error.hpp"
#include "gridgfv/powerflow.hpp"
#include "gridgfv/reduction.hpp"
#include "gridgfv/spectral.hpp"

namespace gridgfv {

struct GridAnalysis {
  PowerFlowSolution powerflow;
  std::vector<InternalEmf> emfs;
  AugmentedAdmittance augmented;
  ParticipationMatrix participation;
  Eigen::MatrixXd bus_gen_susceptance;
  LaplacianMatrix laplacian;
  SpectralDecomposition decomposition;
  FiedlerResult fiedler;
  NodalInertiaVector inertia;
  GfvResult gfv;
};

/// Throws DataError listing every violation.
inline void require_valid(const NetworkCase& net) {
  auto violations = validate_case(net);
  if (violations.empty()) return;
  std::string msg = "invalid case:";
  for (const auto& v : violations) msg += "\n  " + v.entity + ": " + v.rule + ": " + v.message;
  throw DataError(msg);
}

inline GridAnalysis analyze_case(const NetworkCase& net, const PowerFlowOptions& pf = {}) {
  require_valid(net);
  GridAnalysis a;
  a.powerflow = solve_powerflow(net, pf);
  a.emfs = internal_emfs(net, a.powerflow);
  a.augmented = augment_internal_nodes(build_ybus(net), net);
  a.participation = frequency_participation(a.augmented);
  a.bus_gen_susceptance = bus_generator_susceptance(a.augmented);
  a.laplacian = build_laplacian(net, a.powerflow);
  a.decomposition = eigendecompose(a.laplacian);
  a.fiedler = fiedler(a.decomposition);
  a.inertia = nodal_inertia(net, a.powerflow, a.emfs, a.participation, a.bus_gen_susceptance);
  a.gfv = gfv(solve_gep(a.laplacian, a.inertia));
  return a;
}

}  // namespace gridgfv
