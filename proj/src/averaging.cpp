#include "formation/averaging.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

namespace formation {

namespace {

// f_l(p) for every channel l = i * n + k, plus what Df_l needs.
struct FieldCache {
  std::vector<Eigen::VectorXd> fields;          // f_l(p)
  std::vector<double> amplitude;                // per agent
  std::vector<Eigen::VectorXd> local_gradient;  // grad V_i, per agent
};

FieldCache build_fields(const FormationSpec& spec, const BodyFrames& frames,
                        const DistanceOnlyConfig& cfg, const Configuration& p,
                        bool with_gradients) {
  const int N = spec.agent_count();
  const int n = spec.dimension();
  FieldCache cache;
  cache.amplitude.resize(N);
  if (with_gradients) cache.local_gradient.resize(N);
  cache.fields.reserve(static_cast<std::size_t>(N) * n);
  for (int i = 0; i < N; ++i) {
    cache.amplitude[i] = control_field_amplitude(spec, cfg, i, p);
    if (with_gradients) {
      if (!(cache.amplitude[i] > 0.0)) {
        throw NonsmoothPoint("transformed dynamics need rho_i / w + V_i > 0 (agent " +
                             std::to_string(i + 1) + ")");
      }
      cache.local_gradient[i] = local_potential_gradient(spec, i, p);
    }
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXd f = Eigen::VectorXd::Zero(p.size());
      agent_block(f, i, n) = cache.amplitude[i] * frames.basis(i).col(k);
      cache.fields.push_back(std::move(f));
    }
  }
  return cache;
}

Eigen::VectorXd weighted_field_sum(const FormationSpec& spec, const DistanceOnlyConfig& cfg,
                                   const FieldCache& cache, double t, Eigen::Index size) {
  const int n = spec.dimension();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(size);
  for (int i = 0; i < spec.agent_count(); ++i) {
    for (int k = 0; k < n; ++k) {
      sum += dither_antiderivative(cfg, {i, k}, t) * cache.fields[i * n + k];
    }
  }
  return sum;
}

}  // namespace

double dither_antiderivative(const DistanceOnlyConfig& cfg, Channel l, double t) {
  const double w = cfg.omega * cfg.frequencies(l.agent, l.axis);
  return 2.0 * std::sin(w * t + cfg.phases(l.agent, l.axis));
}

double dither_product_coefficient(const DistanceOnlyConfig& cfg, Channel a, Channel b,
                                  double t) {
  const double delta = (a.agent == b.agent && a.axis == b.axis) ? 2.0 : 0.0;
  return dither_antiderivative(cfg, a, t) * dither_antiderivative(cfg, b, t) - delta;
}

SystemState l_transform(const FormationSpec& spec, const BodyFrames& frames,
                        const DistanceOnlyConfig& cfg, const SystemState& state) {
  require_state(spec, state);
  require_frames(frames, spec);
  const FieldCache cache = build_fields(spec, frames, cfg, state.p, false);
  return {state.t, state.p,
          state.v - weighted_field_sum(spec, cfg, cache, state.t, state.v.size())};
}

SystemState inverse_l_transform(const FormationSpec& spec, const BodyFrames& frames,
                                const DistanceOnlyConfig& cfg, const SystemState& transformed) {
  require_state(spec, transformed);
  require_frames(frames, spec);
  const FieldCache cache = build_fields(spec, frames, cfg, transformed.p, false);
  return {transformed.t, transformed.p,
          transformed.v + weighted_field_sum(spec, cfg, cache, transformed.t,
                                             transformed.v.size())};
}

StateDerivative rhs_transformed(const FormationSpec& spec, const BodyFrames& frames,
                                const DistanceOnlyConfig& cfg, const SystemState& x) {
  require_state(spec, x);
  require_frames(frames, spec);
  const int N = spec.agent_count();
  const int n = spec.dimension();
  const Eigen::Index dim = x.p.size();
  const double t = x.t;
  const FieldCache cache = build_fields(spec, frames, cfg, x.p, true);
  const Eigen::VectorXd r = damping_diagonal(cfg.damping, n);

  // Df_l(p) w for l = (i, k).
  auto field_derivative = [&](int i, int k, const Eigen::VectorXd& w) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    agent_block(out, i, n) = (cache.local_gradient[i].dot(w) / (2.0 * cache.amplitude[i])) *
                             frames.basis(i).col(k);
    return out;
  };

  std::vector<double> U(static_cast<std::size_t>(N) * n);
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < n; ++k) U[i * n + k] = dither_antiderivative(cfg, {i, k}, t);
  }

  StateDerivative d;
  d.dp = x.v;
  d.dv = -r.cwiseProduct(x.v) - potential_gradient(spec, x.p);
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < n; ++k) {
      const int l = i * n + k;
      d.dp += U[l] * cache.fields[l];
      d.dv -= U[l] * r.cwiseProduct(cache.fields[l]);
      d.dv -= U[l] * field_derivative(i, k, x.v);

      // sum_{l'} U_{l,l'} f_{l'}
      Eigen::VectorXd mixed = Eigen::VectorXd::Zero(dim);
      for (int lp = 0; lp < N * n; ++lp) {
        const double coeff = U[l] * U[lp] - (lp == l ? 2.0 : 0.0);
        mixed += coeff * cache.fields[lp];
      }
      d.dv -= field_derivative(i, k, mixed);
    }
  }
  return d;
}

TransformConsistency transform_consistency(const FormationSpec& spec, const BodyFrames& frames,
                                           const DistanceOnlyConfig& cfg,
                                           const SystemState& initial, double horizon,
                                           int samples_per_period) {
  IntegratorConfig integ;
  integ.step = horizon;
  integ.horizon = horizon;
  integ.samples_per_period = samples_per_period;
  const double fastest = cfg.fastest_angular_frequency();
  const RightHandSide direct = [&](const SystemState& x) {
    return rhs_distance_only(spec, frames, cfg, x);
  };
  const RightHandSide transformed = [&](const SystemState& x) {
    return rhs_transformed(spec, frames, cfg, x);
  };
  const Trajectory a = integrate(direct, initial, integ, fastest);
  const Trajectory b = integrate(transformed, l_transform(spec, frames, cfg, initial), integ, fastest);

  TransformConsistency out;
  out.step = a.metadata.step;
  double sum_sq = 0.0;
  long long count = 0;
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    const SystemState back = inverse_l_transform(spec, frames, cfg, b.samples[k]);
    const Eigen::VectorXd dp = a.samples[k].p - back.p;
    const Eigen::VectorXd dv = a.samples[k].v - back.v;
    sum_sq += dp.squaredNorm() + dv.squaredNorm();
    count += dp.size() + dv.size();
    out.max_abs = std::max({out.max_abs, dp.lpNorm<Eigen::Infinity>(), dv.lpNorm<Eigen::Infinity>()});
  }
  out.rms = std::sqrt(sum_sq / static_cast<double>(count));
  out.sample_count = static_cast<int>(a.samples.size());
  return out;
}

LemmaBounds check_lemma_energy_bounds(const FormationSpec& spec, const BodyFrames& frames,
                                      const DistanceOnlyConfig& cfg,
                                      const std::vector<SystemState>& states) {
  if (states.empty()) throw ValidationError("Lemma bound check needs at least one state");
  const double rho_max = *std::max_element(cfg.offsets.begin(), cfg.offsets.end());
  const double floor = rho_max / cfg.omega;
  LemmaBounds out;
  for (const SystemState& x : states) {
    const SystemState xt = l_transform(spec, frames, cfg, x);
    const double e = total_energy(spec, x).total;
    const double et = total_energy(spec, xt).total;
    // 0/0 only happens at rest on target with rho = 0, where x~ = x.
    if (floor + e > 0.0) out.kappa1_raw = std::max(out.kappa1_raw, et / (floor + e));
    if (floor + et > 0.0) out.kappa2_raw = std::max(out.kappa2_raw, e / (floor + et));
    ++out.sample_count;
  }
  out.kappa1 = 1.1 * out.kappa1_raw;
  out.kappa2 = 1.1 * out.kappa2_raw;
  return out;
}

double tail_mean_energy(const EnergyTrace& trace, double start_fraction) {
  if (trace.empty()) throw ValidationError("empty energy trace");
  const double t0 = trace.front().t;
  const double t_start = t0 + start_fraction * (trace.back().t - t0);
  double sum = 0.0;
  int count = 0;
  for (const EnergySample& s : trace) {
    if (s.t >= t_start - 1e-12) {
      sum += s.total;
      ++count;
    }
  }
  return sum / count;
}

SweepResult sweep_omega(const SweepSetup& setup, const std::vector<double>& omegas,
                        double horizon) {
  if (omegas.empty()) throw ValidationError("omega list is empty");
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    if (!(omegas[k] > 0.0)) throw ValidationError("omega values must be positive");
    if (k > 0 && !(omegas[k] > omegas[k - 1])) {
      throw ValidationError("omega values must be strictly increasing");
    }
  }

  auto run_one = [&setup, horizon](double omega) {
    SweepEntry entry;
    entry.omega = omega;
    DistanceOnlyConfig cfg = setup.controller;
    cfg.omega = omega;
    IntegratorConfig integ = setup.integrator;
    integ.horizon = horizon;
    try {
      const RightHandSide rhs = [&](const SystemState& s) {
        return rhs_distance_only(setup.spec, setup.frames, cfg, s);
      };
      const Trajectory traj = integrate(rhs, setup.initial, integ, cfg.fastest_angular_frequency());
      const EnergyTrace trace = energy_trace(setup.spec, traj);
      entry.step = traj.metadata.step;
      entry.terminal_energy = trace.back().total;
      entry.tail_residual = tail_mean_energy(trace);
      const double t_start = trace.front().t + 0.8 * (trace.back().t - trace.front().t);
      for (const EnergySample& s : trace) {
        if (s.t >= t_start - 1e-12) entry.residual_floor = std::max(entry.residual_floor, s.total);
      }
      if (!std::isfinite(entry.tail_residual)) {
        entry.diverged = true;
        entry.error = "non-finite tail energy";
      } else {
        entry.settled = entry.tail_residual < kSettleFraction * trace.front().total;
        if (!entry.settled) entry.error = "tail energy did not settle below the initial level";
      }
    } catch (const FormationError& e) {
      entry.diverged = true;
      entry.error = e.what();
    }
    return entry;
  };

  std::vector<std::future<SweepEntry>> jobs;
  jobs.reserve(omegas.size());
  for (double omega : omegas) jobs.push_back(std::async(std::launch::async, run_one, omega));

  SweepResult result;
  result.horizon = horizon;
  for (auto& job : jobs) result.entries.push_back(job.get());

  std::vector<std::pair<double, double>> points;
  for (const SweepEntry& e : result.entries) {
    if (!e.diverged && e.settled && e.tail_residual > 0.0) {
      points.emplace_back(std::log(e.omega), std::log(e.tail_residual));
    }
  }
  if (points.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : points) {
      mx += x;
      my += y;
    }
    mx /= static_cast<double>(points.size());
    my /= static_cast<double>(points.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : points) {
      sxx += (x - mx) * (x - mx);
      sxy += (x - mx) * (y - my);
    }
    result.slope = sxy / sxx;
  }
  return result;
}

bool check_practical_bound(const EnergyTrace& trace, double initial_energy, double rho,
                           double omega, double lambda, double mu, double t0) {
  const double floor = std::sqrt(rho / omega);
  for (const EnergySample& s : trace) {
    const double bound = floor + lambda * initial_energy * std::exp(-mu * (s.t - t0));
    if (s.total > 1.05 * bound) return false;
  }
  return true;
}

PracticalBound calibrate_practical_bound(const EnergyTrace& gradient_trace,
                                         const EnergyTrace& distance_only_trace, double omega) {
  if (gradient_trace.empty() || distance_only_trace.size() < 2) {
    throw ValidationError("calibration needs a gradient trace and a distance-only trace");
  }
  const DecayFit fit = fit_exponential(gradient_trace, default_fit_window(gradient_trace));
  if (!(fit.mu > 0.0)) throw EstimationError("gradient run does not decay; cannot calibrate");

  PracticalBound out;
  out.mu = fit.mu;
  const double t0 = distance_only_trace.front().t;
  const double e0 = distance_only_trace.front().total;

  // lambda covers the transient, taken as one time constant 1 / mu of the
  // averaged decay; the dither's initial energy surge lives there.
  out.lambda = fit.lambda;
  for (const EnergySample& s : distance_only_trace) {
    if (s.t > t0 + 1.0 / out.mu) break;
    out.lambda = std::max(out.lambda, s.total * std::exp(out.mu * (s.t - t0)) / e0);
  }

  // Smallest rho covering what the decaying term leaves over.
  double excess = 0.0;
  for (const EnergySample& s : distance_only_trace) {
    excess = std::max(excess, s.total - out.lambda * e0 * std::exp(-out.mu * (s.t - t0)));
  }
  out.rho = omega * excess * excess;
  return out;
}

}  // namespace formation
