#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "formation/controllers.hpp"
#include "formation/energy.hpp"
#include "formation/errors.hpp"
#include "formation/graph.hpp"

namespace formation {

struct StateDerivative {
  Eigen::VectorXd dp;
  Eigen::VectorXd dv;
};

// Right-hand side of a (possibly time-dependent) closed loop; time is state.t.
using RightHandSide = std::function<StateDerivative(const SystemState&)>;

// Optional hook applied to distance measurements before the controller sees them.
using MeasurementModel = std::function<void(DistanceMeasurements&, double t)>;

struct IntegratorConfig {
  double step = 1e-3;          // h [s]
  int record_every = 1;        // keep every k-th state
  double horizon = 10.0;       // T [s]
  int samples_per_period = 20; // steps per period of the fastest dither
};

struct TrajectoryMetadata {
  std::string scenario_id;
  std::string controller;
  std::optional<double> omega;
  double step = 0.0;
};

struct Trajectory {
  std::vector<SystemState> samples;
  TrajectoryMetadata metadata;
};

struct EnergySample {
  double t = 0.0;
  double kinetic = 0.0;
  double potential = 0.0;
  double total = 0.0;
};

using EnergyTrace = std::vector<EnergySample>;

struct FitWindow {
  double t_begin = 0.0;
  double t_end = 0.0;
};

// log E(t) ~ log(lambda E(t_0)) - mu (t - t_0), t_0 the first trace sample.
struct DecayFit {
  double lambda = 0.0;
  double mu = 0.0;
  double r_squared = 0.0;
  FitWindow window;
};

// Raised when the integrator produces a non-finite state.
class DivergenceError : public FormationError {
 public:
  DivergenceError(const std::string& what, SystemState last_finite)
      : FormationError(what), last_finite_(std::move(last_finite)) {}
  const SystemState& last_finite() const { return last_finite_; }

 private:
  SystemState last_finite_;
};

void validate(const IntegratorConfig& cfg);

// p' = v,  v' = -R v - grad V(p), evaluated through gradient_control.
StateDerivative rhs_gradient(const FormationSpec& spec, const BodyFrames& frames,
                             const GradientControllerConfig& cfg, const SystemState& state);

// p' = v,  v' = -R v + sum_l u_l(t) f_l(p), evaluated through distance_only_control
// from measured distances and body-frame velocities.
StateDerivative rhs_distance_only(const FormationSpec& spec, const BodyFrames& frames,
                                  const DistanceOnlyConfig& cfg, const SystemState& state,
                                  const MeasurementModel& measurement_model = {});

// p' = v,  v' = -R v - sum_l <f_l : f_l>(p)
StateDerivative rhs_averaged(const FormationSpec& spec, const BodyFrames& frames,
                             const DistanceOnlyConfig& cfg, const SystemState& state);

// Step actually used: min(cfg.step, 2 pi / fastest / samples_per_period),
// or cfg.step when fastest_angular_frequency <= 0.
double resolve_step(const IntegratorConfig& cfg, double fastest_angular_frequency);

// Classical fixed-step RK4 from initial.t to initial.t + horizon. The step is
// shrunk to resolve_step() and then to an integer number of steps.
Trajectory integrate(const RightHandSide& rhs, const SystemState& initial,
                     const IntegratorConfig& cfg, double fastest_angular_frequency = 0.0);

// One RK4 step.
SystemState rk4_step(const RightHandSide& rhs, const SystemState& state, double h);

EnergyTrace energy_trace(const FormationSpec& spec, const Trajectory& trajectory);

// Largest (E_{k+1} - E_k) / E_k over consecutive samples; <= 0 for a
// non-increasing trace. Pairs with E_k = 0 count only if E_{k+1} > 0 (as +inf).
double max_relative_energy_increase(const EnergyTrace& trace);

// Least-squares line through (t, log E) restricted to the window.
DecayFit fit_exponential(const EnergyTrace& trace, FitWindow window);

// Default fit window [0.2 T, T] over the trace's time span.
FitWindow default_fit_window(const EnergyTrace& trace);

// Empirical order from terminal states at h, h/2, h/4:
//   log2(|x_h - x_{h/2}| / |x_{h/2} - x_{h/4}|).
double estimate_convergence_order(const RightHandSide& rhs, const SystemState& initial,
                                  double step, double horizon);

// CSV: t,E,T,V,p_1_x,...,p_N_<axis>,v_1_x,...,v_N_<axis>
void write_trajectory_csv(std::ostream& out, const FormationSpec& spec,
                          const Trajectory& trajectory);
// CSV: t,E,T,V
void write_energy_csv(std::ostream& out, const EnergyTrace& trace);

}  // namespace formation
