#include "formation/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "formation/errors.hpp"

namespace formation {

namespace {

// ||p_j - p_i||^2 - d_ij^2 for edge k.
double edge_residual(const FormationSpec& spec, const Configuration& p, int k) {
  const Edge& e = spec.graph().edges()[k];
  const int n = spec.dimension();
  return (agent_block(p, e.j, n) - agent_block(p, e.i, n)).squaredNorm() -
         spec.squared_distances()[k];
}

void require_agent(const FormationSpec& spec, int agent) {
  if (agent < 0 || agent >= spec.agent_count()) {
    throw DimensionError("agent index " + std::to_string(agent) + " out of range");
  }
}

double min_generalized_eigenvalue(const Eigen::Matrix2d& a, const Eigen::Matrix2d& b) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix2d> es(a, b);
  return es.eigenvalues().minCoeff();
}

double max_generalized_eigenvalue(const Eigen::Matrix2d& a, const Eigen::Matrix2d& b) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix2d> es(a, b);
  return es.eigenvalues().maxCoeff();
}

double min_eigenvalue(const Eigen::Matrix2d& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(m).eigenvalues().minCoeff();
}

// target + s dir with the largest s (to bisection accuracy) keeping V <= level.
Configuration point_on_level(const FormationSpec& spec, const Configuration& target,
                             const Eigen::VectorXd& dir, double level) {
  // Bracket the scale so that V(target + hi*dir) > level.
  double lo = 0.0;
  double hi = 1e-3;
  int grow = 0;
  while (potential(spec, target + hi * dir) <= level && grow < 200) {
    lo = hi;
    hi *= 2.0;
    ++grow;
  }
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (potential(spec, target + mid * dir) <= level) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return target + lo * dir;
}

}  // namespace

void require_state(const FormationSpec& spec, const SystemState& state) {
  require_configuration(spec, state.p);
  if (state.v.size() != state.p.size()) {
    throw DimensionError("velocity and position dimensions differ");
  }
}

double potential(const FormationSpec& spec, const Configuration& p) {
  require_configuration(spec, p);
  double sum = 0.0;
  for (int k = 0; k < spec.edge_count(); ++k) {
    const double r = edge_residual(spec, p, k);
    sum += r * r;
  }
  return 0.25 * sum;
}

double local_potential(const FormationSpec& spec, int agent, const Configuration& p) {
  require_configuration(spec, p);
  require_agent(spec, agent);
  double sum = 0.0;
  for (int k : spec.graph().incident_edges(agent)) {
    const double r = edge_residual(spec, p, k);
    sum += r * r;
  }
  return 0.25 * sum;
}

double local_potential_from_distances(const FormationSpec& spec, int agent,
                                      std::span<const double> edge_lengths) {
  require_agent(spec, agent);
  if (static_cast<int>(edge_lengths.size()) != spec.edge_count()) {
    throw DimensionError("one measured distance per edge is required");
  }
  double sum = 0.0;
  for (int k : spec.graph().incident_edges(agent)) {
    const double m = edge_lengths[k];
    const double r = m * m - spec.squared_distances()[k];
    sum += r * r;
  }
  return 0.25 * sum;
}

Eigen::VectorXd potential_gradient(const FormationSpec& spec, const Configuration& p) {
  require_configuration(spec, p);
  const int n = spec.dimension();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.size());
  for (int k = 0; k < spec.edge_count(); ++k) {
    const Edge& e = spec.graph().edges()[k];
    const Eigen::VectorXd diff = agent_block(p, e.i, n) - agent_block(p, e.j, n);
    const double r = diff.squaredNorm() - spec.squared_distances()[k];
    agent_block(grad, e.i, n) += r * diff;
    agent_block(grad, e.j, n) -= r * diff;
  }
  return grad;
}

Eigen::VectorXd local_potential_gradient(const FormationSpec& spec, int agent,
                                         const Configuration& p) {
  require_configuration(spec, p);
  require_agent(spec, agent);
  const int n = spec.dimension();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.size());
  for (int k : spec.graph().incident_edges(agent)) {
    const Edge& e = spec.graph().edges()[k];
    const Eigen::VectorXd diff = agent_block(p, e.i, n) - agent_block(p, e.j, n);
    const double r = diff.squaredNorm() - spec.squared_distances()[k];
    agent_block(grad, e.i, n) += r * diff;
    agent_block(grad, e.j, n) -= r * diff;
  }
  return grad;
}

Eigen::VectorXd finite_difference_gradient(const FormationSpec& spec, const Configuration& p,
                                           double h) {
  require_configuration(spec, p);
  Eigen::VectorXd g(p.size());
  Configuration q = p;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    q[k] = p[k] + h;
    const double up = potential(spec, q);
    q[k] = p[k] - h;
    const double down = potential(spec, q);
    q[k] = p[k];
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

Eigen::VectorXd potential_hessian_apply(const FormationSpec& spec, const Configuration& p,
                                        const Eigen::VectorXd& w) {
  require_configuration(spec, p);
  if (w.size() != p.size()) throw DimensionError("direction has wrong dimension");
  const int n = spec.dimension();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.size());
  for (int k = 0; k < spec.edge_count(); ++k) {
    const Edge& e = spec.graph().edges()[k];
    const Eigen::VectorXd diff = agent_block(p, e.i, n) - agent_block(p, e.j, n);
    const Eigen::VectorXd dw = agent_block(w, e.i, n) - agent_block(w, e.j, n);
    const double r = diff.squaredNorm() - spec.squared_distances()[k];
    // d/dp_i of r * diff, applied to the relative direction dw.
    const Eigen::VectorXd contrib = 2.0 * diff.dot(dw) * diff + r * dw;
    agent_block(out, e.i, n) += contrib;
    agent_block(out, e.j, n) -= contrib;
  }
  return out;
}

EnergyBreakdown total_energy(const FormationSpec& spec, const SystemState& state) {
  require_state(spec, state);
  EnergyBreakdown e;
  e.kinetic = 0.5 * state.v.squaredNorm();
  e.potential = potential(spec, state.p);
  e.total = e.kinetic + e.potential;
  return e;
}

Eigen::VectorXd damping_diagonal(std::span<const double> gains, int dimension) {
  Eigen::VectorXd diag(static_cast<Eigen::Index>(gains.size()) * dimension);
  for (std::size_t i = 0; i < gains.size(); ++i) {
    diag.segment(static_cast<Eigen::Index>(i) * dimension, dimension).setConstant(gains[i]);
  }
  return diag;
}

double chetaev_value(const FormationSpec& spec, const SystemState& state, double epsilon) {
  const EnergyBreakdown e = total_energy(spec, state);
  return e.total + epsilon * potential_gradient(spec, state.p).dot(state.v);
}

double chetaev_derivative(const FormationSpec& spec, const SystemState& state,
                          double epsilon, const Eigen::VectorXd& damping) {
  require_state(spec, state);
  if (damping.size() != state.v.size()) throw DimensionError("damping has wrong dimension");
  const Eigen::VectorXd& v = state.v;
  const Eigen::VectorXd grad = potential_gradient(spec, state.p);
  const Eigen::VectorXd rv = damping.cwiseProduct(v);
  return -rv.dot(v) + epsilon * potential_hessian_apply(spec, state.p, v).dot(v) -
         epsilon * grad.squaredNorm() - epsilon * rv.dot(grad);
}

double hessian_norm_estimate(const FormationSpec& spec, const Configuration& p,
                             std::uint64_t seed, int iterations) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd w(p.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = gauss(rng);
  w.normalize();
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd hw = potential_hessian_apply(spec, p, w);
    estimate = hw.norm();
    if (estimate == 0.0) return 0.0;
    w = hw / estimate;
  }
  return estimate;
}

Configuration find_target_configuration(const FormationSpec& spec, std::uint64_t seed) {
  const auto& d = spec.distances();
  const double scale = *std::max_element(d.begin(), d.end());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);

  constexpr int kAttempts = 32;
  constexpr int kIterations = 200000;
  const double goal = 1e-24 * std::pow(scale, 4);
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Configuration p(spec.state_dimension());
    for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = gauss(rng);
    double value = potential(spec, p);
    double step = 1.0 / (scale * scale);
    for (int it = 0; it < kIterations && value > goal; ++it) {
      const Eigen::VectorXd grad = potential_gradient(spec, p);
      const double g2 = grad.squaredNorm();
      if (g2 == 0.0) break;
      // Armijo backtracking.
      for (;;) {
        Configuration trial = p - step * grad;
        const double trial_value = potential(spec, trial);
        if (trial_value <= value - 0.5 * step * g2) {
          p = std::move(trial);
          value = trial_value;
          step *= 2.0;
          break;
        }
        step *= 0.5;
        if (step < 1e-300) break;
      }
      if (step < 1e-300) break;
    }
    if (value <= goal) return p;
  }
  throw EstimationError("could not locate a configuration realizing the desired distances");
}

SublevelConstants estimate_sublevel_constants(const FormationSpec& spec,
                                              const Configuration& target, double L,
                                              int sample_count, std::uint64_t seed) {
  require_configuration(spec, target);
  if (!(L > 0.0)) throw ValidationError("sublevel bound L must be positive");
  if (sample_count <= 0) throw ValidationError("sample_count must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double ratio_min = std::numeric_limits<double>::infinity();
  double ratio_max = 0.0;
  double hess_max = 0.0;
  int used = 0;

  for (int s = 0; s < sample_count; ++s) {
    Eigen::VectorXd dir(target.size());
    for (Eigen::Index k = 0; k < dir.size(); ++k) dir[k] = gauss(rng);
    const double level = L * (1.0 - unit(rng));  // (0, L]

    const Configuration p = point_on_level(spec, target, dir, level);
    const double value = potential(spec, p);
    if (!(value > 0.0) || value > L) continue;

    const double g2 = potential_gradient(spec, p).squaredNorm();
    ratio_min = std::min(ratio_min, g2 / value);
    ratio_max = std::max(ratio_max, g2 / value);
    hess_max = std::max(hess_max, hessian_norm_estimate(spec, p, rng()));
    ++used;
  }
  if (used == 0) {
    throw EstimationError("sublevel sampling produced no point with V > 0");
  }

  SublevelConstants c;
  c.L = L;
  c.alpha0 = 0.9 * ratio_min;
  c.alpha1 = 1.1 * ratio_max;
  c.alpha2 = 1.1 * hess_max;
  c.sample_count = used;
  if (!(c.alpha0 > 0.0)) {
    throw EstimationError("gradient domination constant alpha0 estimated as zero");
  }
  return c;
}

std::vector<Configuration> sample_sublevel_points(const FormationSpec& spec,
                                                  const Configuration& target, double L,
                                                  int count, std::uint64_t seed) {
  require_configuration(spec, target);
  if (!(L > 0.0)) throw ValidationError("sublevel bound L must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Configuration> points;
  points.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int s = 0; s < count; ++s) {
    Eigen::VectorXd dir(target.size());
    for (Eigen::Index k = 0; k < dir.size(); ++k) dir[k] = gauss(rng);
    points.push_back(point_on_level(spec, target, dir, L * (1.0 - unit(rng))));
  }
  return points;
}

SublevelConstants estimate_sublevel_constants(const FormationSpec& spec, double L,
                                              int sample_count, std::uint64_t seed) {
  return estimate_sublevel_constants(spec, find_target_configuration(spec, seed), L,
                                     sample_count, seed);
}

ChetaevParams chetaev_matrices(const SublevelConstants& c, double epsilon, double r_min,
                               double r_max) {
  ChetaevParams out;
  out.epsilon = epsilon;
  out.r_min = r_min;
  out.r_max = r_max;
  out.O << 1.0 / c.alpha1, -epsilon / 2.0, -epsilon / 2.0, 0.5;
  out.P << 1.0 / c.alpha0, epsilon / 2.0, epsilon / 2.0, 0.5;
  out.Q << epsilon, -epsilon * r_max / 2.0, -epsilon * r_max / 2.0, r_min - epsilon * c.alpha2;

  Eigen::Matrix2d O0 = Eigen::Matrix2d::Zero();
  O0.diagonal() << 1.0 / c.alpha1, 0.5;
  Eigen::Matrix2d P0 = Eigen::Matrix2d::Zero();
  P0.diagonal() << 1.0 / c.alpha0, 0.5;

  // With w = (|grad V|, |v|):  w'O0w <= E <= w'P0w,  w'O_eps w <= E_eps <= w'P_eps w,
  // dE_eps/dt <= -w'Q_eps w.  The gammas are the generalized eigenvalue ratios.
  if (min_eigenvalue(out.O) > 0.0 && min_eigenvalue(out.P) > 0.0) {
    out.gamma0 = min_generalized_eigenvalue(out.O, P0);
    out.gamma1 = max_generalized_eigenvalue(out.P, O0);
    out.gamma2 = min_generalized_eigenvalue(out.Q, out.P);
  }
  return out;
}

double chetaev_epsilon_bound(const SublevelConstants& c, double r_min, double r_max) {
  // det Q_eps > 0  <=>  eps (r_min - eps alpha2) - eps^2 r_max^2 / 4 > 0
  return r_min / (c.alpha2 + r_max * r_max / 4.0);
}

ChetaevParams find_chetaev_epsilon(const SublevelConstants& c, double r_min, double r_max) {
  if (!(c.alpha0 > 0.0 && c.alpha1 > 0.0 && c.alpha2 > 0.0 && r_min > 0.0 && r_max > 0.0)) {
    throw ValidationError("Chetaev search needs positive alpha0, alpha1, alpha2, r_min, r_max");
  }
  const double upper = std::min({chetaev_epsilon_bound(c, r_min, r_max),
                                 std::sqrt(2.0 / c.alpha1), std::sqrt(2.0 / c.alpha0)});

  auto margin = [&](double eps) {
    const ChetaevParams m = chetaev_matrices(c, eps, r_min, r_max);
    return std::min({min_eigenvalue(m.O), min_eigenvalue(m.P), min_eigenvalue(m.Q)});
  };

  // Each margin is the smallest eigenvalue of a matrix affine in eps, hence
  // concave; golden-section search finds the maximum of their minimum.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 0.0;
  double b = upper;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = margin(x1);
  double f2 = margin(x2);
  for (int it = 0; it < 200 && (b - a) > 1e-15 * upper; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = margin(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = margin(x1);
    }
  }
  const double eps = 0.5 * (a + b);
  if (!(eps > 0.0) || !(margin(eps) > 0.0)) {
    throw EstimationError("no epsilon makes all Chetaev matrices positive definite");
  }
  return chetaev_matrices(c, eps, r_min, r_max);
}

}  // namespace formation
