#include "formation/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

namespace formation {

namespace {

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string axis_name(int k, int n) {
  if (n <= 3) return std::string(1, "xyz"[k]);
  return std::to_string(k + 1);
}

bool finite(const SystemState& s) { return s.p.allFinite() && s.v.allFinite(); }

}  // namespace

void validate(const IntegratorConfig& cfg) {
  if (!(cfg.step > 0.0) || !std::isfinite(cfg.step)) {
    throw ValidationError("integrator step must be positive");
  }
  if (!(cfg.horizon > 0.0) || !std::isfinite(cfg.horizon)) {
    throw ValidationError("integration horizon must be positive");
  }
  if (cfg.record_every < 1) throw ValidationError("record_every must be at least 1");
  if (cfg.samples_per_period < 1) throw ValidationError("samples_per_period must be at least 1");
}

StateDerivative rhs_gradient(const FormationSpec& spec, const BodyFrames& frames,
                             const GradientControllerConfig& cfg, const SystemState& state) {
  const ControlInputs a = gradient_control(spec, frames, cfg, state);
  return {state.v, reconstruct_acceleration(frames, a)};
}

StateDerivative rhs_distance_only(const FormationSpec& spec, const BodyFrames& frames,
                                  const DistanceOnlyConfig& cfg, const SystemState& state,
                                  const MeasurementModel& measurement_model) {
  require_state(spec, state);
  require_frames(frames, spec);
  DistanceMeasurements m = measure_distances(spec, state.p);
  if (measurement_model) measurement_model(m, state.t);
  const Eigen::MatrixXd vel = velocity_components(frames, state.v);
  const ControlInputs a = distance_only_control(spec, cfg, vel, m, state.t);
  return {state.v, reconstruct_acceleration(frames, a)};
}

StateDerivative rhs_averaged(const FormationSpec& spec, const BodyFrames& frames,
                             const DistanceOnlyConfig& cfg, const SystemState& state) {
  require_state(spec, state);
  const Eigen::VectorXd r = damping_diagonal(cfg.damping, spec.dimension());
  return {state.v,
          -r.cwiseProduct(state.v) - symmetric_product_sum(spec, cfg, frames, state.p)};
}

double resolve_step(const IntegratorConfig& cfg, double fastest_angular_frequency) {
  if (!(fastest_angular_frequency > 0.0)) return cfg.step;
  const double period = 2.0 * std::numbers::pi / fastest_angular_frequency;
  return std::min(cfg.step, period / cfg.samples_per_period);
}

SystemState rk4_step(const RightHandSide& rhs, const SystemState& s, double h) {
  const StateDerivative k1 = rhs(s);
  const SystemState s2{s.t + 0.5 * h, s.p + 0.5 * h * k1.dp, s.v + 0.5 * h * k1.dv};
  const StateDerivative k2 = rhs(s2);
  const SystemState s3{s.t + 0.5 * h, s.p + 0.5 * h * k2.dp, s.v + 0.5 * h * k2.dv};
  const StateDerivative k3 = rhs(s3);
  const SystemState s4{s.t + h, s.p + h * k3.dp, s.v + h * k3.dv};
  const StateDerivative k4 = rhs(s4);
  return {s.t + h, s.p + (h / 6.0) * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp),
          s.v + (h / 6.0) * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv)};
}

Trajectory integrate(const RightHandSide& rhs, const SystemState& initial,
                     const IntegratorConfig& cfg, double fastest_angular_frequency) {
  validate(cfg);
  if (!finite(initial)) throw ValidationError("initial state is not finite");
  const double h_max = resolve_step(cfg, fastest_angular_frequency);
  const auto steps = static_cast<long long>(std::ceil(cfg.horizon / h_max - 1e-9));
  const double h = cfg.horizon / static_cast<double>(steps);

  Trajectory traj;
  traj.metadata.step = h;
  traj.samples.reserve(static_cast<std::size_t>(steps / cfg.record_every + 2));
  traj.samples.push_back(initial);

  SystemState state = initial;
  for (long long k = 1; k <= steps; ++k) {
    SystemState next = rk4_step(rhs, state, h);
    // Times are recomputed from the step count so spacing stays uniform.
    next.t = initial.t + static_cast<double>(k) * h;
    if (!finite(next)) {
      throw DivergenceError("integration diverged at t = " + format_number(next.t), state);
    }
    state = std::move(next);
    if (k % cfg.record_every == 0) traj.samples.push_back(state);
  }
  return traj;
}

EnergyTrace energy_trace(const FormationSpec& spec, const Trajectory& trajectory) {
  EnergyTrace trace;
  trace.reserve(trajectory.samples.size());
  for (const SystemState& s : trajectory.samples) {
    const EnergyBreakdown e = total_energy(spec, s);
    trace.push_back({s.t, e.kinetic, e.potential, e.total});
  }
  return trace;
}

double max_relative_energy_increase(const EnergyTrace& trace) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const double prev = trace[k - 1].total;
    const double next = trace[k].total;
    if (prev > 0.0) {
      worst = std::max(worst, (next - prev) / prev);
    } else if (next > 0.0) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return worst == -std::numeric_limits<double>::infinity() ? 0.0 : worst;
}

FitWindow default_fit_window(const EnergyTrace& trace) {
  if (trace.empty()) return {};
  const double t0 = trace.front().t;
  const double t1 = trace.back().t;
  return {t0 + 0.2 * (t1 - t0), t1};
}

DecayFit fit_exponential(const EnergyTrace& trace, FitWindow window) {
  if (trace.empty()) throw ValidationError("cannot fit an empty energy trace");
  const double t_ref = trace.front().t;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::vector<std::pair<double, double>> points;
  for (const EnergySample& s : trace) {
    if (s.t < window.t_begin - 1e-12 || s.t > window.t_end + 1e-12) continue;
    if (!(s.total > 0.0)) {
      throw ValidationError("energy is not positive at t = " + format_number(s.t) +
                            "; shrink the fit window");
    }
    points.emplace_back(s.t - t_ref, std::log(s.total));
  }
  if (points.size() < 2) throw ValidationError("fit window holds fewer than two samples");
  const double count = static_cast<double>(points.size());
  for (const auto& [x, y] : points) {
    sx += x;
    sy += y;
  }
  const double mx = sx / count;
  const double my = sy / count;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (!(sxx > 0.0)) throw ValidationError("fit window spans a single instant");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;

  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& [x, y] : points) {
    const double r = y - (intercept + slope * x);
    ss_res += r * r;
    ss_tot += (y - my) * (y - my);
  }
  DecayFit fit;
  fit.mu = -slope;
  fit.lambda = std::exp(intercept) / trace.front().total;
  fit.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  fit.window = window;
  return fit;
}

double estimate_convergence_order(const RightHandSide& rhs, const SystemState& initial,
                                  double step, double horizon) {
  auto terminal = [&](double h) {
    const auto steps = static_cast<long long>(std::llround(horizon / h));
    SystemState s = initial;
    for (long long k = 0; k < steps; ++k) s = rk4_step(rhs, s, h);
    Eigen::VectorXd x(2 * initial.p.size());
    x << s.p, s.v;
    return x;
  };
  const Eigen::VectorXd coarse = terminal(step);
  const Eigen::VectorXd mid = terminal(step / 2.0);
  const Eigen::VectorXd fine = terminal(step / 4.0);
  return std::log2((coarse - mid).norm() / (mid - fine).norm());
}

void write_trajectory_csv(std::ostream& out, const FormationSpec& spec,
                          const Trajectory& trajectory) {
  const int n = spec.dimension();
  const int N = spec.agent_count();
  out << "t,E,T,V";
  for (const char* prefix : {"p", "v"}) {
    for (int i = 0; i < N; ++i) {
      for (int k = 0; k < n; ++k) out << ',' << prefix << '_' << (i + 1) << '_' << axis_name(k, n);
    }
  }
  out << '\n';
  for (const SystemState& s : trajectory.samples) {
    const EnergyBreakdown e = total_energy(spec, s);
    out << format_number(s.t) << ',' << format_number(e.total) << ','
        << format_number(e.kinetic) << ',' << format_number(e.potential);
    for (Eigen::Index k = 0; k < s.p.size(); ++k) out << ',' << format_number(s.p[k]);
    for (Eigen::Index k = 0; k < s.v.size(); ++k) out << ',' << format_number(s.v[k]);
    out << '\n';
  }
}

void write_energy_csv(std::ostream& out, const EnergyTrace& trace) {
  out << "t,E,T,V\n";
  for (const EnergySample& s : trace) {
    out << format_number(s.t) << ',' << format_number(s.total) << ','
        << format_number(s.kinetic) << ',' << format_number(s.potential) << '\n';
  }
}

}  // namespace formation
