#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "formation/controllers.hpp"
#include "formation/energy.hpp"
#include "formation/graph.hpp"
#include "formation/simulation.hpp"

namespace formation {

enum class ControllerKind { kGradient, kDistanceOnly, kAveraged, kTransformed };

std::string to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& name);

// Parameters of the analysis commands (verify / sweep).
struct AnalysisSettings {
  double sublevel_bound = 10.0;  // L
  int sublevel_samples = kDefaultSublevelSamples;
  std::vector<double> omega_list{10.0, 40.0, 160.0, 640.0};
  double sweep_horizon = 20.0;
};

// Everything needed to run one experiment. Agents are numbered from 1 in the
// JSON form and from 0 in memory.
struct ScenarioConfig {
  std::string name;
  FormationSpec spec;
  BodyFrames frames;
  Configuration initial_positions;
  Eigen::VectorXd initial_velocities;
  double initial_time = 0.0;
  std::optional<Configuration> reference_positions;  // a realization of the distances
  ControllerKind kind = ControllerKind::kGradient;
  std::vector<double> damping;
  DistanceOnlyConfig dither;  // used by the distance-only family of controllers
  IntegratorConfig integrator;
  std::uint64_t seed = 1;
  double distance_noise_stddev = 0.0;
  AnalysisSettings analysis;

  SystemState initial_state() const {
    return {initial_time, initial_positions, initial_velocities};
  }
  GradientControllerConfig gradient_config() const { return {damping}; }
};

// Checks dimensions, positivity and frequency distinctness. Throws
// ValidationError / DimensionError.
void validate(const ScenarioConfig& scenario);

ScenarioConfig scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const ScenarioConfig& scenario);

// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ScenarioConfig& scenario);

std::vector<std::string> builtin_scenario_names();
// Throws ValidationError for unknown names.
ScenarioConfig builtin_scenario(const std::string& name);

// Builtin name or path to a JSON file.
ScenarioConfig load_scenario(const std::string& name_or_path);

// Zero-mean Gaussian noise on each measured distance, a pure function of
// (seed, t, edge) so that right-hand sides stay deterministic. Noisy values
// are reflected at zero.
MeasurementModel gaussian_distance_noise(double stddev, std::uint64_t seed);

// Right-hand side for the scenario's controller kind. For kTransformed the
// state is (p, v~).
RightHandSide make_rhs(const ScenarioConfig& scenario);

// Runs the scenario's controller over its horizon, returning the trajectory in
// original (p, v) coordinates.
Trajectory simulate(const ScenarioConfig& scenario);

}  // namespace formation
