#pragma once

#include <vector>

#include <Eigen/Dense>

#include "formation/energy.hpp"
#include "formation/graph.hpp"

namespace formation {

// Per-agent orthonormal body frames. Column k of basis(i) is b_{i,k}.
class BodyFrames {
 public:
  explicit BodyFrames(std::vector<Eigen::MatrixXd> bases);

  // Planar frames b_{i,1} = (cos a_i, sin a_i), b_{i,2} = (-sin a_i, cos a_i).
  static BodyFrames planar(const std::vector<double>& angles);
  static BodyFrames identity(int agent_count, int dimension);

  int agent_count() const { return static_cast<int>(bases_.size()); }
  int dimension() const { return dimension_; }
  const Eigen::MatrixXd& basis(int agent) const { return bases_[agent]; }

 private:
  std::vector<Eigen::MatrixXd> bases_;
  int dimension_ = 0;
};

struct GradientControllerConfig {
  std::vector<double> damping;  // r_i > 0
};

struct DistanceOnlyConfig {
  std::vector<double> damping;  // r_i > 0
  std::vector<double> offsets;  // rho_i >= 0
  double omega = 1.0;           // frequency scale
  Eigen::MatrixXd frequencies;  // omega_{i,k}, N x n, pairwise distinct, > 0
  Eigen::MatrixXd phases;       // phi_{i,k}, N x n

  // omega * max omega_{i,k}
  double fastest_angular_frequency() const;
};

// Control coefficients a_{i,k}, N x n.
using ControlInputs = Eigen::MatrixXd;

// Measured |p_j - p_i| per edge in canonical order.
struct DistanceMeasurements {
  std::vector<double> lengths;
};

// Flattened channel index l = (i, k).
struct Channel {
  int agent = 0;
  int axis = 0;
};

void validate(const GradientControllerConfig& cfg, int agent_count);
void validate(const DistanceOnlyConfig& cfg, int agent_count, int dimension);
void require_frames(const BodyFrames& frames, const FormationSpec& spec);

DistanceMeasurements measure_distances(const FormationSpec& spec, const Configuration& p);

// <v_i, b_{i,k}>, N x n.
Eigen::MatrixXd velocity_components(const BodyFrames& frames, const Eigen::VectorXd& v);

// sum_k a_{i,k} b_{i,k}, stacked.
Eigen::VectorXd reconstruct_acceleration(const BodyFrames& frames, const ControlInputs& a);

// a_{i,k} = -r_i <v_i, b_{i,k}> - <grad_{p_i} V_i(p), b_{i,k}>
ControlInputs gradient_control(const FormationSpec& spec, const BodyFrames& frames,
                               const GradientControllerConfig& cfg, const SystemState& state);

// u_{i,k}(t) = 2 w w_{i,k} cos(w w_{i,k} t + phi_{i,k})
double dither(const DistanceOnlyConfig& cfg, int agent, int axis, double t);

// a_{i,k} = -r_i <v_i, b_{i,k}> + u_{i,k}(t) sqrt(rho_i / w + V_i)
//
// Takes only what an agent senses: its body-frame velocity components and
// distances to its neighbours. Positions are not an input.
ControlInputs distance_only_control(const FormationSpec& spec, const DistanceOnlyConfig& cfg,
                                    const Eigen::MatrixXd& own_velocity_components,
                                    const DistanceMeasurements& measurements, double t);

// sqrt(rho_i / w + V_i(p)), the common amplitude of agent i's vector fields.
double control_field_amplitude(const FormationSpec& spec, const DistanceOnlyConfig& cfg,
                               int agent, const Configuration& p);

// f_l(p) = sqrt(rho_i / w + V_i(p)) B_l
Eigen::VectorXd control_vector_field(const FormationSpec& spec, const DistanceOnlyConfig& cfg,
                                     const BodyFrames& frames, Channel channel,
                                     const Configuration& p);

// Df_l(p) w = B_l <grad V_i(p), w> / (2 sqrt(rho_i / w + V_i(p))).
// Throws NonsmoothPoint where the square root vanishes.
Eigen::VectorXd control_vector_field_derivative(const FormationSpec& spec,
                                                const DistanceOnlyConfig& cfg,
                                                const BodyFrames& frames, Channel channel,
                                                const Configuration& p,
                                                const Eigen::VectorXd& w);

// sum_l <f_l : f_l>(p) = sum_l 2 Df_l(p) f_l(p)
Eigen::VectorXd symmetric_product_sum(const FormationSpec& spec, const DistanceOnlyConfig& cfg,
                                      const BodyFrames& frames, const Configuration& p);

}  // namespace formation
