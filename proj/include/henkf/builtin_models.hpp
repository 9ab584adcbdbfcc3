// Built-in model configurations for the simulation studies.
#pragma once

#include <map>
#include <string>

#include "henkf/model.hpp"
#include "henkf/taper.hpp"

namespace henkf {

// Tridiagonal advection operator: g1 on the diagonal, g2 above, g3 below.
// No wraparound: mass leaving the transect is lost.
Matrix cloud_evolution_matrix(double g1, double g2, double g3, Index n);

enum class PaperModelName { toy_example4, sim_study, cloud, lorenz96 };

PaperModelName paper_model_from_string(const std::string& name);

struct PaperModel {
  HssmModel model;
  int default_horizon = 1;  // T
  TaperSpec default_taper;
  double default_taper_lag = 0.0;  // Wendland-in-lag radius for smoothers
  std::map<std::string, double> constants;
};

// Assemble a fully populated model with the study's constants as defaults;
// entries of `overrides` replace individual constants. Unknown keys throw
// ConfigError.
PaperModel build_paper_model(PaperModelName name,
                             const std::map<std::string, double>& overrides = {});

}  // namespace henkf
