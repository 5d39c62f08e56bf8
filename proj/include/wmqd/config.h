#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "wmqd/attack.h"
#include "wmqd/control.h"
#include "wmqd/detectors.h"
#include "wmqd/optimizer.h"
#include "wmqd/simulator.h"

namespace wmqd {

struct WatermarkSetting {
  std::optional<Matrix> Sigma_e;  // explicit covariance wins over the budget
  double budget_J = 10.0;
  bool optimize = false;
  OptimizerVariant variant = OptimizerVariant::kOptimalKld;
};

/// In-memory form of an experiment file. See README for the JSON layout.
struct ExperimentConfig {
  PlantModel plant;
  AttackModel attack;
  std::optional<double> rho;         // set when the MISO shorthand was used
  std::optional<double> sigma_z_sq;
  WatermarkSetting watermark;
  DetectorConfig detector;
  long nu = 500;
  long burn_in = 200;
  long max_steps = 20000;
  long trials = 2000;
  std::uint64_t seed = 1;
};

/// Parses JSON text. Syntax problems and malformed matrices raise ParseError;
/// values that parse but violate a model precondition raise ValidationError
/// (or InstabilityError). Messages name the key path and, when it can be
/// located, the line in `source`.
ExperimentConfig parse_config(const std::string& text,
                              const std::string& source = "<config>");

ExperimentConfig load_config(const std::string& path);

/// Built-in parameter sets: "system-a" (two states, one output) and
/// "system-b" (four-tank process, two outputs).
ExperimentConfig preset(const std::string& name);

/// Serializes the configuration (with the resolved watermark covariance when
/// given) so that parse_config reads it back. `extra_json`, if non-empty, is a
/// JSON object stored under the key "design".
std::string to_json_text(const ExperimentConfig& cfg,
                         const std::optional<Matrix>& Sigma_e = std::nullopt,
                         const std::string& extra_json = "");

/// The watermark covariance the configuration asks for: the explicit Sigma_e,
/// or the budget_J design (optimized or equal-power).
Matrix resolve_watermark(const ExperimentConfig& cfg,
                         const ControllerSolution& ctrl);

SimConfig to_sim_config(const ExperimentConfig& cfg, const Matrix& Sigma_e);

}  // namespace wmqd
