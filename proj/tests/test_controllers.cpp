#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "formation/controllers.hpp"
#include "formation/errors.hpp"

namespace formation {
namespace {

using testing::gaussian_vector;
using testing::rectangle_dither;
using testing::rectangle_frames;
using testing::rectangle_positions;
using testing::rectangle_spec;

TEST(BodyFramesTest, PlanarFramesAreOrthonormal) {
  const BodyFrames frames = rectangle_frames();
  for (int i = 0; i < 4; ++i) {
    const Eigen::MatrixXd& b = frames.basis(i);
    EXPECT_TRUE((b.transpose() * b).isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-14));
    EXPECT_NEAR(b(0, 0), std::cos((i + 1) * std::numbers::pi / 3.0), 1e-15);
  }
}

TEST(BodyFramesTest, RejectsNonOrthonormal) {
  Eigen::MatrixXd b(2, 2);
  b << 1.0, 0.1, 0.0, 1.0;
  EXPECT_THROW(BodyFrames({b}), ValidationError);
}

TEST(BodyFramesTest, FrameCompleteness) {
  std::mt19937_64 rng(31);
  const BodyFrames frames = rectangle_frames();
  const Eigen::VectorXd v = gaussian_vector(8, rng);
  EXPECT_TRUE(reconstruct_acceleration(frames, velocity_components(frames, v)).isApprox(v, 1e-14));
}

TEST(MeasureDistancesTest, RectangleValues) {
  const DistanceMeasurements m = measure_distances(rectangle_spec(), rectangle_positions());
  const std::vector<double> expected{3.0, 5.0, 4.0, 4.0, 5.0, 3.0};
  ASSERT_EQ(m.lengths.size(), expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_DOUBLE_EQ(m.lengths[k], expected[k]);
}

TEST(MeasureDistancesTest, CoincidentAndConsistentWithEdgeMap) {
  const FormationSpec spec = rectangle_spec();
  for (double d : measure_distances(spec, Eigen::VectorXd::Zero(8)).lengths) EXPECT_EQ(d, 0.0);
  std::mt19937_64 rng(32);
  const Configuration p = gaussian_vector(8, rng, 2.0);
  const DistanceMeasurements m = measure_distances(spec, p);
  const Eigen::VectorXd sq = edge_map(spec.graph(), 2, p);
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(m.lengths[k], std::sqrt(sq[k]), 1e-14 * (1 + m.lengths[k]));
}

TEST(GradientControlTest, EquilibriumAtTarget) {
  const SystemState x{0.0, rectangle_positions(), Eigen::VectorXd::Zero(8)};
  const ControlInputs a =
      gradient_control(rectangle_spec(), rectangle_frames(), {std::vector<double>(4, 50.0)}, x);
  EXPECT_LT(a.norm(), 1e-12);
}

TEST(GradientControlTest, PureDampingAtTarget) {
  std::mt19937_64 rng(33);
  const BodyFrames frames = rectangle_frames();
  const SystemState x{0.0, rectangle_positions(), gaussian_vector(8, rng)};
  const GradientControllerConfig cfg{{1.0, 2.0, 3.0, 4.0}};
  const ControlInputs a = gradient_control(rectangle_spec(), frames, cfg, x);
  const Eigen::MatrixXd c = velocity_components(frames, x.v);
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(a(i, k), -cfg.damping[i] * c(i, k), 1e-12);
  }
}

TEST(GradientControlTest, ReconstructsDampedGradient) {
  std::mt19937_64 rng(34);
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const GradientControllerConfig cfg{{1.0, 2.0, 3.0, 4.0}};
  for (int trial = 0; trial < 10; ++trial) {
    const SystemState x{0.0, gaussian_vector(8, rng, 2.0), gaussian_vector(8, rng)};
    const Eigen::VectorXd acc = reconstruct_acceleration(frames, gradient_control(spec, frames, cfg, x));
    const Eigen::VectorXd expected =
        -damping_diagonal(cfg.damping, 2).cwiseProduct(x.v) - potential_gradient(spec, x.p);
    EXPECT_LT((acc - expected).lpNorm<Eigen::Infinity>(), 1e-12 * (1 + expected.norm()));
  }
}

TEST(DitherTest, VanishesAtZeroWithQuarterPhase) {
  const DistanceOnlyConfig cfg = rectangle_dither();
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(dither(cfg, i, k, 0.0), 0.0, 1e-12);
  }
}

TEST(DitherTest, AmplitudeBoundAndZeroMean) {
  const DistanceOnlyConfig cfg = rectangle_dither(7.0);
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 2; ++k) {
      const double w = cfg.omega * cfg.frequencies(i, k);
      const double period = 2.0 * std::numbers::pi / w;
      const int n = 4000;
      double sum = 0.0;
      for (int s = 0; s < n; ++s) {
        const double u = dither(cfg, i, k, 0.3 + period * s / n);
        EXPECT_LE(std::abs(u), 2.0 * w * (1 + 1e-15));
        sum += u;
      }
      // Rectangle rule is exact for trigonometric polynomials of low degree.
      EXPECT_LT(std::abs(sum * period / n), 1e-10);
    }
  }
}

TEST(DitherTest, ValidationRejectsDuplicateFrequencies) {
  DistanceOnlyConfig cfg = rectangle_dither();
  cfg.frequencies(3, 1) = cfg.frequencies(0, 0);
  EXPECT_THROW(validate(cfg, 4, 2), ValidationError);
  cfg = rectangle_dither();
  cfg.offsets[2] = -0.1;
  EXPECT_THROW(validate(cfg, 4, 2), ValidationError);
  cfg = rectangle_dither();
  cfg.omega = 0.0;
  EXPECT_THROW(validate(cfg, 4, 2), ValidationError);
}

// Closed loop evaluated from positions directly.
ControlInputs position_oracle(const FormationSpec& spec, const BodyFrames& frames,
                              const DistanceOnlyConfig& cfg, const SystemState& x) {
  ControlInputs a(4, 2);
  const Eigen::MatrixXd c = velocity_components(frames, x.v);
  for (int i = 0; i < 4; ++i) {
    const double amp = std::sqrt(cfg.offsets[i] / cfg.omega + local_potential(spec, i, x.p));
    for (int k = 0; k < 2; ++k) {
      const double w = cfg.omega * cfg.frequencies(i, k);
      const double u = 2.0 * w * std::cos(w * x.t + cfg.phases(i, k));
      a(i, k) = -cfg.damping[i] * c(i, k) + u * amp;
    }
  }
  return a;
}

TEST(DistanceOnlyControlTest, MatchesPositionOracle) {
  std::mt19937_64 rng(35);
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const DistanceOnlyConfig cfg = rectangle_dither();
  std::uniform_real_distribution<double> time(0.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    const SystemState x{time(rng), gaussian_vector(8, rng, 2.0), gaussian_vector(8, rng)};
    const ControlInputs a = distance_only_control(
        spec, cfg, velocity_components(frames, x.v), measure_distances(spec, x.p), x.t);
    const ControlInputs expected = position_oracle(spec, frames, cfg, x);
    EXPECT_LT((a - expected).lpNorm<Eigen::Infinity>(), 1e-10 * (1 + expected.norm()));
  }
}

TEST(DistanceOnlyControlTest, PureDampingAtTargetWithoutOffset) {
  std::mt19937_64 rng(36);
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const DistanceOnlyConfig cfg = rectangle_dither(10.0, 0.0);
  const Eigen::MatrixXd c = velocity_components(frames, gaussian_vector(8, rng));
  const ControlInputs a =
      distance_only_control(spec, cfg, c, measure_distances(spec, rectangle_positions()), 0.77);
  EXPECT_LT((a + 50.0 * c).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(DistanceOnlyControlTest, RestAtTimeZeroGivesZero) {
  const FormationSpec spec = rectangle_spec();
  const ControlInputs a =
      distance_only_control(spec, rectangle_dither(), Eigen::MatrixXd::Zero(4, 2),
                            measure_distances(spec, testing::rectangle_initial_positions()), 0.0);
  EXPECT_LT(a.lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(DistanceOnlyControlTest, InvariantUnderRigidMotion) {
  std::mt19937_64 rng(37);
  const FormationSpec spec = rectangle_spec();
  const DistanceOnlyConfig cfg = rectangle_dither();
  const Configuration p = gaussian_vector(8, rng, 2.0);
  const Eigen::MatrixXd c = gaussian_vector(8, rng).reshaped(4, 2);
  const Eigen::Matrix2d rot = testing::rotation(1.234);
  Configuration moved(8);
  for (int i = 0; i < 4; ++i) agent_block(moved, i, 2) = rot * agent_block(p, i, 2) + Eigen::Vector2d(3, -7);
  const ControlInputs a = distance_only_control(spec, cfg, c, measure_distances(spec, p), 1.1);
  const ControlInputs b = distance_only_control(spec, cfg, c, measure_distances(spec, moved), 1.1);
  EXPECT_LT((a - b).lpNorm<Eigen::Infinity>(), 1e-9 * (1 + a.norm()));
}

TEST(DistanceOnlyControlTest, RejectsBadMeasurements) {
  const FormationSpec spec = rectangle_spec();
  DistanceMeasurements m = measure_distances(spec, rectangle_positions());
  m.lengths[2] = std::nan("");
  EXPECT_THROW(distance_only_control(spec, rectangle_dither(), Eigen::MatrixXd::Zero(4, 2), m, 0.0),
               ValidationError);
  m.lengths[2] = -1.0;
  EXPECT_THROW(distance_only_control(spec, rectangle_dither(), Eigen::MatrixXd::Zero(4, 2), m, 0.0),
               ValidationError);
}

TEST(ControlVectorFieldTest, SupportAndNorm) {
  std::mt19937_64 rng(38);
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const DistanceOnlyConfig cfg = rectangle_dither();
  const Configuration p = gaussian_vector(8, rng, 2.0);
  const Eigen::VectorXd f = control_vector_field(spec, cfg, frames, {2, 1}, p);
  EXPECT_NEAR(f.norm(), std::sqrt(0.1 + local_potential(spec, 2, p)), 1e-12 * f.norm());
  for (int i : {0, 1, 3}) EXPECT_EQ(agent_block(f, i, 2).norm(), 0.0);
}

TEST(ControlVectorFieldTest, NormAtTargetWithUnitOffset) {
  const Eigen::VectorXd f = control_vector_field(rectangle_spec(), rectangle_dither(),
                                                 rectangle_frames(), {0, 0}, rectangle_positions());
  EXPECT_NEAR(f.norm(), std::sqrt(0.1), 1e-15);
}

TEST(ControlVectorFieldTest, DerivativeMatchesDifferences) {
  std::mt19937_64 rng(39);
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const DistanceOnlyConfig cfg = rectangle_dither();
  const Configuration p = gaussian_vector(8, rng, 2.0);
  const Eigen::VectorXd w = gaussian_vector(8, rng);
  const double h = 1e-5;
  for (const Channel l : {Channel{0, 0}, Channel{3, 1}}) {
    const Eigen::VectorXd fd = (control_vector_field(spec, cfg, frames, l, p + h * w) -
                                control_vector_field(spec, cfg, frames, l, p - h * w)) /
                               (2 * h);
    const Eigen::VectorXd exact = control_vector_field_derivative(spec, cfg, frames, l, p, w);
    EXPECT_LT((fd - exact).norm(), 1e-6 * (1 + exact.norm()));
  }
}

TEST(ControlVectorFieldTest, DerivativeRefusesNonsmoothPoint) {
  std::mt19937_64 rng(40);
  EXPECT_THROW(control_vector_field_derivative(rectangle_spec(), rectangle_dither(10.0, 0.0),
                                               rectangle_frames(), {1, 0}, rectangle_positions(),
                                               gaussian_vector(8, rng)),
               NonsmoothPoint);
}

TEST(SymmetricProductTest, EqualsGradient) {
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const DistanceOnlyConfig cfg = rectangle_dither();
  double worst = 0.0;
  for (const Configuration& p : sample_sublevel_points(spec, rectangle_positions(), 10.0, 100, 41)) {
    const Eigen::VectorXd g = potential_gradient(spec, p);
    worst = std::max(worst, (symmetric_product_sum(spec, cfg, frames, p) - g).norm() / g.norm());
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(SymmetricProductTest, ZeroAtTarget) {
  EXPECT_LT(symmetric_product_sum(rectangle_spec(), rectangle_dither(), rectangle_frames(),
                                  rectangle_positions())
                .norm(),
            1e-14);
}

TEST(SymmetricProductTest, IndependentOfOmegaAndOffsets) {
  std::mt19937_64 rng(42);
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const Configuration p = gaussian_vector(8, rng, 2.0);
  const Eigen::VectorXd a = symmetric_product_sum(spec, rectangle_dither(10.0, 1.0), frames, p);
  const Eigen::VectorXd b = symmetric_product_sum(spec, rectangle_dither(640.0, 0.2), frames, p);
  EXPECT_LT((a - b).norm(), 1e-12 * a.norm());
}

}  // namespace
}  // namespace formation
