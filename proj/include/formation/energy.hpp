#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "formation/graph.hpp"

namespace formation {

// x = (p, v) at time t.
struct SystemState {
  double t = 0.0;
  Configuration p;
  Eigen::VectorXd v;
};

struct EnergyBreakdown {
  double kinetic = 0.0;
  double potential = 0.0;
  double total = 0.0;
};

// Gradient-domination and Hessian bounds on the sublevel set {V <= L}:
//   alpha0 V <= |grad V|^2 <= alpha1 V,   |Hess V w| <= alpha2 |w|.
struct SublevelConstants {
  double L = 0.0;
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  int sample_count = 0;
};

// Mixing weight for E_eps = E + eps <grad V, v> and the constants that make it
// a strict Lyapunov function:
//   gamma0 E <= E_eps <= gamma1 E,   dE_eps/dt <= -gamma2 E_eps.
struct ChetaevParams {
  double epsilon = 0.0;
  double gamma0 = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double r_min = 0.0;
  double r_max = 0.0;
  Eigen::Matrix2d O;
  Eigen::Matrix2d P;
  Eigen::Matrix2d Q;
};

void require_state(const FormationSpec& spec, const SystemState& state);

double potential(const FormationSpec& spec, const Configuration& p);

// Potential of agent i: only edges incident to i.
double local_potential(const FormationSpec& spec, int agent, const Configuration& p);

// Same as local_potential but from measured edge lengths |p_j - p_i| only
// (canonical edge order). This is what an agent can evaluate on its own.
double local_potential_from_distances(const FormationSpec& spec, int agent,
                                      std::span<const double> edge_lengths);

Eigen::VectorXd potential_gradient(const FormationSpec& spec, const Configuration& p);

// Full nN gradient of the local potential V_i (nonzero at i and its neighbours).
Eigen::VectorXd local_potential_gradient(const FormationSpec& spec, int agent,
                                         const Configuration& p);

// Central differences of V with step h, one coordinate at a time.
Eigen::VectorXd finite_difference_gradient(const FormationSpec& spec, const Configuration& p,
                                           double h);

// Hessian-vector product, assembled edge by edge.
Eigen::VectorXd potential_hessian_apply(const FormationSpec& spec, const Configuration& p,
                                        const Eigen::VectorXd& w);

EnergyBreakdown total_energy(const FormationSpec& spec, const SystemState& state);

// Diagonal of R: r_i repeated n times per agent.
Eigen::VectorXd damping_diagonal(std::span<const double> gains, int dimension);

double chetaev_value(const FormationSpec& spec, const SystemState& state, double epsilon);

// Derivative of E_eps along the damped gradient system with damping
// diagonal `damping` (length nN).
double chetaev_derivative(const FormationSpec& spec, const SystemState& state,
                          double epsilon, const Eigen::VectorXd& damping);

// Largest |eigenvalue| of Hess V(p) by power iteration.
double hessian_norm_estimate(const FormationSpec& spec, const Configuration& p,
                             std::uint64_t seed, int iterations = 50);

// Some p with V(p) ~ 0, found by gradient descent from seeded random starts.
Configuration find_target_configuration(const FormationSpec& spec, std::uint64_t seed);

inline constexpr int kDefaultSublevelSamples = 512;

// Monte-Carlo estimate of the sublevel constants around `target`. Samples are
// Gaussian perturbations of the target whose scale is bisected so that V
// lands at a uniformly drawn level in (0, L].
SublevelConstants estimate_sublevel_constants(const FormationSpec& spec,
                                              const Configuration& target, double L,
                                              int sample_count, std::uint64_t seed);

// Points with V <= L around `target`, drawn like the samples above.
std::vector<Configuration> sample_sublevel_points(const FormationSpec& spec,
                                                  const Configuration& target, double L,
                                                  int count, std::uint64_t seed);

// Locates a target configuration first.
SublevelConstants estimate_sublevel_constants(const FormationSpec& spec, double L,
                                              int sample_count, std::uint64_t seed);

// 2x2 matrices O_eps, P_eps, Q_eps of the Chetaev argument.
ChetaevParams chetaev_matrices(const SublevelConstants& constants, double epsilon,
                               double r_min, double r_max);

// Largest eps for which Q_eps stays positive definite.
double chetaev_epsilon_bound(const SublevelConstants& constants, double r_min, double r_max);

// eps maximizing the smallest eigenvalue among O_eps, P_eps, Q_eps.
ChetaevParams find_chetaev_epsilon(const SublevelConstants& constants, double r_min,
                                   double r_max);

}  // namespace formation
