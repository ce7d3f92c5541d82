#pragma once

#include <optional>
#include <string>
#include <vector>

#include "formation/controllers.hpp"
#include "formation/energy.hpp"
#include "formation/simulation.hpp"

namespace formation {

// U_l(t) = 2 sin(w w_l t + phi_l), an antiderivative of the dither u_l.
double dither_antiderivative(const DistanceOnlyConfig& cfg, Channel channel, double t);

// U_{l,l'}(t) = U_l(t) U_l'(t) - 2 delta_{l,l'}
double dither_product_coefficient(const DistanceOnlyConfig& cfg, Channel a, Channel b,
                                  double t);

// v~ = v - sum_l U_l(t) f_l(p). Returns (t, p, v~).
SystemState l_transform(const FormationSpec& spec, const BodyFrames& frames,
                        const DistanceOnlyConfig& cfg, const SystemState& state);

// v = v~ + sum_l U_l(t) f_l(p).
SystemState inverse_l_transform(const FormationSpec& spec, const BodyFrames& frames,
                                const DistanceOnlyConfig& cfg, const SystemState& transformed);

// Distance-only closed loop written in (p, v~):
//   p'  = v~ + sum_l U_l f_l(p)
//   v~' = -R v~ - grad V(p) - sum_l U_l R f_l(p) - sum_l U_l Df_l(p) v~
//         - sum_{l,l'} U_{l,l'} Df_l(p) f_l'(p)
StateDerivative rhs_transformed(const FormationSpec& spec, const BodyFrames& frames,
                                const DistanceOnlyConfig& cfg, const SystemState& transformed);

struct TransformConsistency {
  double rms = 0.0;      // over every component of every recorded (p, v)
  double max_abs = 0.0;
  double step = 0.0;
  int sample_count = 0;
};

// Integrates the distance-only loop directly and in (p, v~) from the same
// initial state over `horizon`, with step fastest_period / samples_per_period,
// and compares the two after mapping back.
TransformConsistency transform_consistency(const FormationSpec& spec, const BodyFrames& frames,
                                           const DistanceOnlyConfig& cfg,
                                           const SystemState& initial, double horizon,
                                           int samples_per_period);

struct LemmaBounds {
  // Smallest constants with E(x~) <= k1 (rho_max / w + E(x)) and
  // E(x) <= k2 (rho_max / w + E(x~)) over the samples.
  double kappa1_raw = 0.0;
  double kappa2_raw = 0.0;
  // Raw values times 1.1.
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  int sample_count = 0;
};

// Each state carries its own time t.
LemmaBounds check_lemma_energy_bounds(const FormationSpec& spec, const BodyFrames& frames,
                                      const DistanceOnlyConfig& cfg,
                                      const std::vector<SystemState>& states);

// Mean energy over the last (1 - start_fraction) of the trace's time span.
double tail_mean_energy(const EnergyTrace& trace, double start_fraction = 0.8);

struct SweepSetup {
  FormationSpec spec;
  BodyFrames frames;
  DistanceOnlyConfig controller;  // omega is overridden per entry
  SystemState initial;
  IntegratorConfig integrator;    // horizon is overridden by the sweep
};

struct SweepEntry {
  double omega = 0.0;
  bool diverged = false;
  std::string error;
  double step = 0.0;
  double terminal_energy = 0.0;
  double tail_residual = 0.0;  // mean E over [0.8 T, T]
  double residual_floor = 0.0; // max E over [0.8 T, T]
  // Tail residual below kSettleFraction of the initial energy. Entries that
  // diverged or did not settle are excluded from the slope.
  bool settled = false;
};

inline constexpr double kSettleFraction = 0.1;

struct SweepResult {
  std::vector<SweepEntry> entries;
  // Least-squares slope of log(residual) vs log(omega) over non-diverged
  // entries; empty when fewer than two are available.
  std::optional<double> slope;
  double horizon = 0.0;
};

// Runs the distance-only closed loop once per omega (concurrently) from the
// same initial state.
SweepResult sweep_omega(const SweepSetup& setup, const std::vector<double>& omegas,
                        double horizon);

struct PracticalBound {
  double rho = 0.0;
  double lambda = 0.0;
  double mu = 0.0;
};

// E(t) <= 1.05 (sqrt(rho / w) + lambda E0 exp(-mu (t - t0))) at every sample.
bool check_practical_bound(const EnergyTrace& trace, double initial_energy, double rho,
                           double omega, double lambda, double mu, double t0);

// mu from a log-linear fit of the gradient run; lambda the smallest value
// (never below the fitted one) enveloping the distance-only trace during its
// first 1 / mu seconds; rho the smallest offset letting the rest pass.
PracticalBound calibrate_practical_bound(const EnergyTrace& gradient_trace,
                                         const EnergyTrace& distance_only_trace,
                                         double omega);

}  // namespace formation
