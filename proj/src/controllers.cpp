#include "formation/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "formation/errors.hpp"

namespace formation {

BodyFrames::BodyFrames(std::vector<Eigen::MatrixXd> bases) : bases_(std::move(bases)) {
  if (bases_.empty()) throw ValidationError("at least one body frame is required");
  dimension_ = static_cast<int>(bases_.front().rows());
  for (std::size_t i = 0; i < bases_.size(); ++i) {
    const Eigen::MatrixXd& b = bases_[i];
    if (b.rows() != dimension_ || b.cols() != dimension_) {
      throw DimensionError("body frame " + std::to_string(i + 1) + " is not n x n");
    }
    const double defect =
        (b.transpose() * b - Eigen::MatrixXd::Identity(dimension_, dimension_))
            .lpNorm<Eigen::Infinity>();
    if (!(defect <= 1e-12)) {
      throw ValidationError("body frame " + std::to_string(i + 1) + " is not orthonormal");
    }
  }
}

BodyFrames BodyFrames::planar(const std::vector<double>& angles) {
  std::vector<Eigen::MatrixXd> bases;
  bases.reserve(angles.size());
  for (double a : angles) {
    Eigen::MatrixXd b(2, 2);
    b << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    bases.push_back(std::move(b));
  }
  return BodyFrames(std::move(bases));
}

BodyFrames BodyFrames::identity(int agent_count, int dimension) {
  return BodyFrames(std::vector<Eigen::MatrixXd>(
      agent_count, Eigen::MatrixXd::Identity(dimension, dimension)));
}

double DistanceOnlyConfig::fastest_angular_frequency() const {
  return omega * frequencies.maxCoeff();
}

void validate(const GradientControllerConfig& cfg, int agent_count) {
  if (static_cast<int>(cfg.damping.size()) != agent_count) {
    throw DimensionError("one damping gain per agent is required");
  }
  for (double r : cfg.damping) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("damping gains must be positive");
  }
}

void validate(const DistanceOnlyConfig& cfg, int agent_count, int dimension) {
  validate(GradientControllerConfig{cfg.damping}, agent_count);
  if (static_cast<int>(cfg.offsets.size()) != agent_count) {
    throw DimensionError("one offset rho_i per agent is required");
  }
  for (double rho : cfg.offsets) {
    if (!(rho >= 0.0) || !std::isfinite(rho)) {
      throw ValidationError("offsets rho_i must be nonnegative");
    }
  }
  if (!(cfg.omega > 0.0) || !std::isfinite(cfg.omega)) {
    throw ValidationError("frequency scale omega must be positive");
  }
  if (cfg.frequencies.rows() != agent_count || cfg.frequencies.cols() != dimension ||
      cfg.phases.rows() != agent_count || cfg.phases.cols() != dimension) {
    throw DimensionError("frequency and phase tables must be N x n");
  }
  std::set<double> seen;
  for (Eigen::Index i = 0; i < cfg.frequencies.size(); ++i) {
    const double w = cfg.frequencies.data()[i];
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ValidationError("frequency coefficients must be positive");
    }
    if (!seen.insert(w).second) {
      throw ValidationError("frequency coefficients must be pairwise distinct");
    }
  }
  if (!cfg.phases.allFinite()) throw ValidationError("phase shifts must be finite");
}

void require_frames(const BodyFrames& frames, const FormationSpec& spec) {
  if (frames.agent_count() != spec.agent_count() || frames.dimension() != spec.dimension()) {
    throw DimensionError("body frames do not match the formation");
  }
}

DistanceMeasurements measure_distances(const FormationSpec& spec, const Configuration& p) {
  const Eigen::VectorXd squared = edge_map(spec.graph(), spec.dimension(), p);
  DistanceMeasurements m;
  m.lengths.resize(squared.size());
  for (Eigen::Index k = 0; k < squared.size(); ++k) m.lengths[k] = std::sqrt(squared[k]);
  return m;
}

Eigen::MatrixXd velocity_components(const BodyFrames& frames, const Eigen::VectorXd& v) {
  const int n = frames.dimension();
  if (v.size() != static_cast<Eigen::Index>(n) * frames.agent_count()) {
    throw DimensionError("velocity does not match the body frames");
  }
  Eigen::MatrixXd out(frames.agent_count(), n);
  for (int i = 0; i < frames.agent_count(); ++i) {
    out.row(i) = (frames.basis(i).transpose() * agent_block(v, i, n)).transpose();
  }
  return out;
}

Eigen::VectorXd reconstruct_acceleration(const BodyFrames& frames, const ControlInputs& a) {
  const int n = frames.dimension();
  Eigen::VectorXd out(static_cast<Eigen::Index>(n) * frames.agent_count());
  for (int i = 0; i < frames.agent_count(); ++i) {
    agent_block(out, i, n) = frames.basis(i) * a.row(i).transpose();
  }
  return out;
}

ControlInputs gradient_control(const FormationSpec& spec, const BodyFrames& frames,
                               const GradientControllerConfig& cfg, const SystemState& state) {
  require_state(spec, state);
  require_frames(frames, spec);
  const int n = spec.dimension();
  const Eigen::MatrixXd vel = velocity_components(frames, state.v);
  ControlInputs a(spec.agent_count(), n);
  for (int i = 0; i < spec.agent_count(); ++i) {
    // grad_{p_i} V_i, built from relative positions p_i - p_j.
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (int k : spec.graph().incident_edges(i)) {
      const Edge& e = spec.graph().edges()[k];
      const int j = e.i == i ? e.j : e.i;
      const Eigen::VectorXd rel = agent_block(state.p, i, n) - agent_block(state.p, j, n);
      g += (rel.squaredNorm() - spec.squared_distances()[k]) * rel;
    }
    a.row(i) = -cfg.damping[i] * vel.row(i) - (frames.basis(i).transpose() * g).transpose();
  }
  return a;
}

double dither(const DistanceOnlyConfig& cfg, int agent, int axis, double t) {
  const double w = cfg.omega * cfg.frequencies(agent, axis);
  return 2.0 * w * std::cos(w * t + cfg.phases(agent, axis));
}

ControlInputs distance_only_control(const FormationSpec& spec, const DistanceOnlyConfig& cfg,
                                    const Eigen::MatrixXd& own_velocity_components,
                                    const DistanceMeasurements& measurements, double t) {
  const int N = spec.agent_count();
  const int n = spec.dimension();
  if (own_velocity_components.rows() != N || own_velocity_components.cols() != n) {
    throw DimensionError("velocity components must be N x n");
  }
  for (double m : measurements.lengths) {
    if (std::isnan(m)) throw ValidationError("distance measurement is NaN");
    if (m < 0.0) throw ValidationError("distance measurement is negative");
  }
  ControlInputs a(N, n);
  for (int i = 0; i < N; ++i) {
    const double vi = local_potential_from_distances(spec, i, measurements.lengths);
    const double amplitude = std::sqrt(cfg.offsets[i] / cfg.omega + vi);
    for (int k = 0; k < n; ++k) {
      a(i, k) = -cfg.damping[i] * own_velocity_components(i, k) +
                dither(cfg, i, k, t) * amplitude;
    }
  }
  return a;
}

double control_field_amplitude(const FormationSpec& spec, const DistanceOnlyConfig& cfg,
                               int agent, const Configuration& p) {
  return std::sqrt(cfg.offsets[agent] / cfg.omega + local_potential(spec, agent, p));
}

Eigen::VectorXd control_vector_field(const FormationSpec& spec, const DistanceOnlyConfig& cfg,
                                     const BodyFrames& frames, Channel channel,
                                     const Configuration& p) {
  const int n = spec.dimension();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(p.size());
  agent_block(f, channel.agent, n) = control_field_amplitude(spec, cfg, channel.agent, p) *
                                     frames.basis(channel.agent).col(channel.axis);
  return f;
}

Eigen::VectorXd control_vector_field_derivative(const FormationSpec& spec,
                                                const DistanceOnlyConfig& cfg,
                                                const BodyFrames& frames, Channel channel,
                                                const Configuration& p,
                                                const Eigen::VectorXd& w) {
  const int n = spec.dimension();
  const double amplitude = control_field_amplitude(spec, cfg, channel.agent, p);
  if (!(amplitude > 0.0)) {
    throw NonsmoothPoint("control vector field of agent " + std::to_string(channel.agent + 1) +
                         " is not differentiable where rho_i = 0 and V_i = 0");
  }
  const double slope =
      local_potential_gradient(spec, channel.agent, p).dot(w) / (2.0 * amplitude);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.size());
  agent_block(out, channel.agent, n) = slope * frames.basis(channel.agent).col(channel.axis);
  return out;
}

Eigen::VectorXd symmetric_product_sum(const FormationSpec& spec, const DistanceOnlyConfig& cfg,
                                      const BodyFrames& frames, const Configuration& p) {
  require_configuration(spec, p);
  require_frames(frames, spec);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(p.size());
  for (int i = 0; i < spec.agent_count(); ++i) {
    for (int k = 0; k < spec.dimension(); ++k) {
      const Channel l{i, k};
      const Eigen::VectorXd f = control_vector_field(spec, cfg, frames, l, p);
      sum += 2.0 * control_vector_field_derivative(spec, cfg, frames, l, p, f);
    }
  }
  return sum;
}

}  // namespace formation
