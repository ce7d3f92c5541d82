#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "formation/errors.hpp"
#include "formation/simulation.hpp"

namespace formation {
namespace {

using testing::gaussian_vector;
using testing::rectangle_dither;
using testing::rectangle_frames;
using testing::rectangle_initial_positions;
using testing::rectangle_positions;
using testing::rectangle_spec;

SystemState scalar_state(double x) {
  return {0.0, Eigen::VectorXd::Constant(1, x), Eigen::VectorXd::Zero(1)};
}

EnergyTrace synthetic_trace(double amplitude, double rate, double dt, int count) {
  EnergyTrace trace;
  for (int k = 0; k < count; ++k) {
    const double t = k * dt;
    const double e = amplitude * std::exp(-rate * t);
    trace.push_back({t, 0.0, e, e});
  }
  return trace;
}

TEST(Rk4Test, SingleStepOfExponentialDecay) {
  const RightHandSide rhs = [](const SystemState& s) {
    return StateDerivative{-s.p, Eigen::VectorXd::Zero(1)};
  };
  const SystemState next = rk4_step(rhs, scalar_state(1.0), 0.1);
  EXPECT_NEAR(next.p[0], 0.9048375, 1e-15);
  EXPECT_DOUBLE_EQ(next.t, 0.1);
}

TEST(IntegrateTest, ConstantFieldGivesConstantTrajectory) {
  const RightHandSide rhs = [](const SystemState& s) {
    return StateDerivative{Eigen::VectorXd::Zero(s.p.size()), Eigen::VectorXd::Zero(s.v.size())};
  };
  IntegratorConfig cfg;
  cfg.step = 0.01;
  cfg.horizon = 1.0;
  const Trajectory traj = integrate(rhs, scalar_state(2.5), cfg);
  ASSERT_EQ(traj.samples.size(), 101u);
  for (const SystemState& s : traj.samples) EXPECT_EQ(s.p[0], 2.5);
}

TEST(IntegrateTest, UniformIncreasingTimesAndDecimation) {
  const RightHandSide rhs = [](const SystemState& s) {
    return StateDerivative{s.v, -s.p};
  };
  IntegratorConfig cfg;
  cfg.step = 0.003;
  cfg.horizon = 1.0;
  cfg.record_every = 3;
  const Trajectory traj = integrate(rhs, {0.5, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1)}, cfg);
  ASSERT_GE(traj.samples.size(), 3u);
  EXPECT_DOUBLE_EQ(traj.samples.front().t, 0.5);
  // Only every third step is kept, so the run may end between records.
  EXPECT_LE(traj.samples.back().t, 1.5 + 1e-12);
  EXPECT_GT(traj.samples.back().t, 1.5 - 3 * traj.metadata.step);
  const double spacing = traj.samples[1].t - traj.samples[0].t;
  EXPECT_NEAR(spacing, 3 * traj.metadata.step, 1e-12);
  for (std::size_t k = 1; k < traj.samples.size(); ++k) {
    EXPECT_NEAR(traj.samples[k].t - traj.samples[k - 1].t, spacing, 1e-12);
  }
}

TEST(IntegrateTest, StepResolvesFastestDither) {
  IntegratorConfig cfg;
  cfg.step = 1e-3;
  cfg.samples_per_period = 20;
  const double w = 640.0 * 8.0;
  EXPECT_NEAR(resolve_step(cfg, w), 2.0 * std::numbers::pi / w / 20.0, 1e-18);
  EXPECT_EQ(resolve_step(cfg, 1.0), 1e-3);
  EXPECT_EQ(resolve_step(cfg, 0.0), 1e-3);
}

TEST(IntegrateTest, DivergenceKeepsLastFiniteState) {
  const RightHandSide rhs = [](const SystemState& s) {
    const double bad = s.t > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 1.0;
    return StateDerivative{Eigen::VectorXd::Constant(1, bad), Eigen::VectorXd::Zero(1)};
  };
  IntegratorConfig cfg;
  cfg.step = 0.1;
  cfg.horizon = 2.0;
  try {
    integrate(rhs, scalar_state(0.0), cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_TRUE(e.last_finite().p.allFinite());
    EXPECT_LE(e.last_finite().t, 0.5 + 1e-12);
  }
}

TEST(IntegrateTest, RejectsBadConfig) {
  const RightHandSide rhs = [](const SystemState& s) { return StateDerivative{s.v, s.p}; };
  IntegratorConfig cfg;
  cfg.step = 0.0;
  EXPECT_THROW(integrate(rhs, scalar_state(1.0), cfg), ValidationError);
  cfg = IntegratorConfig{};
  cfg.horizon = -1.0;
  EXPECT_THROW(integrate(rhs, scalar_state(1.0), cfg), ValidationError);
}

TEST(RhsGradientTest, EquilibriumAndDissipation) {
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const GradientControllerConfig cfg{{50.0, 50.0, 50.0, 50.0}};
  const StateDerivative rest =
      rhs_gradient(spec, frames, cfg, {0.0, rectangle_positions(), Eigen::VectorXd::Zero(8)});
  EXPECT_LT(rest.dp.norm() + rest.dv.norm(), 1e-12);

  std::mt19937_64 rng(51);
  const SystemState x{0.0, gaussian_vector(8, rng, 2.0), gaussian_vector(8, rng)};
  const StateDerivative d = rhs_gradient(spec, frames, cfg, x);
  const double dE = x.v.dot(d.dv) + potential_gradient(spec, x.p).dot(d.dp);
  EXPECT_NEAR(dE, -50.0 * x.v.squaredNorm(), 1e-9 * x.v.squaredNorm() * 50.0);
}

TEST(RhsDistanceOnlyTest, PureDampingAtTimeZero) {
  std::mt19937_64 rng(52);
  const SystemState x{0.0, gaussian_vector(8, rng, 2.0), gaussian_vector(8, rng)};
  const StateDerivative d =
      rhs_distance_only(rectangle_spec(), rectangle_frames(), rectangle_dither(), x);
  EXPECT_LT((d.dv + 50.0 * x.v).norm(), 1e-10 * (1 + x.v.norm()));
  EXPECT_EQ(d.dp, x.v);
}

TEST(RhsDistanceOnlyTest, MatchesControlAffineForm) {
  std::mt19937_64 rng(53);
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const DistanceOnlyConfig cfg = rectangle_dither();
  std::uniform_real_distribution<double> time(0.0, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    const SystemState x{time(rng), gaussian_vector(8, rng, 2.0), gaussian_vector(8, rng)};
    Eigen::VectorXd expected = -50.0 * x.v;
    for (int i = 0; i < 4; ++i) {
      for (int k = 0; k < 2; ++k) {
        expected += dither(cfg, i, k, x.t) * control_vector_field(spec, cfg, frames, {i, k}, x.p);
      }
    }
    const StateDerivative d = rhs_distance_only(spec, frames, cfg, x);
    EXPECT_LT((d.dv - expected).norm(), 1e-10 * expected.norm());
  }
}

TEST(RhsDistanceOnlyTest, DitherForceGrowsLikeSqrtOmega) {
  // At rest, |v'| = |sum_l u_l f_l| ~ w * sqrt(rho / w + V) ~ sqrt(w) once rho / w
  // dominates V; at the target V = 0 exactly.
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const SystemState x{0.0, rectangle_positions(), Eigen::VectorXd::Zero(8)};
  auto force = [&](double omega) {
    DistanceOnlyConfig cfg = rectangle_dither(omega);
    cfg.phases.setZero();
    return rhs_distance_only(spec, frames, cfg, x).dv.norm();
  };
  EXPECT_NEAR(force(400.0) / force(100.0), 2.0, 1e-9);
}

TEST(RhsAveragedTest, IdenticalToGradientSystem) {
  std::mt19937_64 rng(54);
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const GradientControllerConfig gcfg{std::vector<double>(4, 50.0)};
  for (double omega : {1.0, 10.0, 100.0}) {
    const DistanceOnlyConfig cfg = rectangle_dither(omega);
    for (int trial = 0; trial < 100; ++trial) {
      const SystemState x{0.0, rectangle_positions() + gaussian_vector(8, rng), gaussian_vector(8, rng)};
      const StateDerivative a = rhs_averaged(spec, frames, cfg, x);
      const StateDerivative g = rhs_gradient(spec, frames, gcfg, x);
      EXPECT_LT((a.dv - g.dv).norm(), 1e-10 * g.dv.norm());
    }
  }
}

TEST(EnergyTraceTest, SumsAndZeroAtTarget) {
  Trajectory traj;
  std::mt19937_64 rng(55);
  traj.samples.push_back({0.0, rectangle_positions(), Eigen::VectorXd::Zero(8)});
  traj.samples.push_back({0.1, gaussian_vector(8, rng), gaussian_vector(8, rng)});
  const EnergyTrace trace = energy_trace(rectangle_spec(), traj);
  EXPECT_EQ(trace[0].total, 0.0);
  EXPECT_EQ(trace[1].total, trace[1].kinetic + trace[1].potential);
}

TEST(EnergyTraceTest, GradientRunIsMonotone) {
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const GradientControllerConfig cfg{std::vector<double>(4, 50.0)};
  const RightHandSide rhs = [&](const SystemState& x) { return rhs_gradient(spec, frames, cfg, x); };
  IntegratorConfig icfg;
  icfg.horizon = 10.0;
  const EnergyTrace trace = energy_trace(
      spec, integrate(rhs, {0.0, rectangle_initial_positions(), Eigen::VectorXd::Zero(8)}, icfg));
  EXPECT_LE(max_relative_energy_increase(trace), 1e-9);
  const DecayFit fit = fit_exponential(trace, default_fit_window(trace));
  EXPECT_GT(fit.mu, 0.0);
  EXPECT_GE(fit.r_squared, 0.98);
}

TEST(EnergyTraceTest, TranslationEquivariance) {
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const GradientControllerConfig cfg{std::vector<double>(4, 50.0)};
  const RightHandSide rhs = [&](const SystemState& x) { return rhs_gradient(spec, frames, cfg, x); };
  IntegratorConfig icfg;
  icfg.horizon = 2.0;
  Configuration shifted = rectangle_initial_positions();
  const Eigen::Vector2d offset(4.0, -1.5);
  for (int i = 0; i < 4; ++i) agent_block(shifted, i, 2) += offset;
  const Trajectory a = integrate(rhs, {0.0, rectangle_initial_positions(), Eigen::VectorXd::Zero(8)}, icfg);
  const Trajectory b = integrate(rhs, {0.0, shifted, Eigen::VectorXd::Zero(8)}, icfg);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t k = 0; k < a.samples.size(); k += 50) {
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector2d d = agent_block(b.samples[k].p, i, 2) - agent_block(a.samples[k].p, i, 2);
      EXPECT_LT((d - offset).norm(), 1e-9);
    }
    EXPECT_LT((a.samples[k].v - b.samples[k].v).norm(), 1e-9);
  }
}

TEST(FitExponentialTest, ExactExponential) {
  const EnergyTrace trace = synthetic_trace(2.0, 3.0, 0.01, 200);
  const DecayFit fit = fit_exponential(trace, {0.0, 2.0});
  EXPECT_NEAR(fit.mu, 3.0, 1e-10);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
  EXPECT_NEAR(fit.lambda, 1.0, 1e-10);
}

TEST(FitExponentialTest, ConstantTrace) {
  const DecayFit fit = fit_exponential(synthetic_trace(4.0, 0.0, 0.1, 50), {0.0, 5.0});
  EXPECT_NEAR(fit.mu, 0.0, 1e-14);
  EXPECT_GE(fit.r_squared, 0.0);
  EXPECT_LE(fit.r_squared, 1.0);
}

TEST(FitExponentialTest, NoisyExponentialWithinFivePercent) {
  std::mt19937_64 rng(56);
  std::normal_distribution<double> noise(0.0, 0.01);
  EnergyTrace trace = synthetic_trace(5.0, 1.5, 0.01, 500);
  for (EnergySample& s : trace) s.total *= 1.0 + noise(rng);
  const DecayFit fit = fit_exponential(trace, {1.0, 5.0});
  EXPECT_NEAR(fit.mu, 1.5, 0.05 * 1.5);
}

TEST(FitExponentialTest, RejectsNonpositiveEnergy) {
  EnergyTrace trace = synthetic_trace(1.0, 1.0, 0.1, 20);
  trace[10].total = 0.0;
  EXPECT_THROW(fit_exponential(trace, {0.0, 2.0}), ValidationError);
  EXPECT_NO_THROW(fit_exponential(trace, {1.1, 2.0}));
}

TEST(ConvergenceOrderTest, GradientScenarioIsFourthOrder) {
  const FormationSpec spec = rectangle_spec();
  const BodyFrames frames = rectangle_frames();
  const GradientControllerConfig cfg{std::vector<double>(4, 50.0)};
  const RightHandSide rhs = [&](const SystemState& x) { return rhs_gradient(spec, frames, cfg, x); };
  const double order = estimate_convergence_order(
      rhs, {0.0, rectangle_initial_positions(), Eigen::VectorXd::Zero(8)}, 0.005, 1.0);
  EXPECT_GE(order, 3.7);
  EXPECT_LE(order, 4.3);
}

TEST(CsvTest, TrajectoryHeaderAndRows) {
  Trajectory traj;
  traj.samples.push_back({0.0, rectangle_initial_positions(), Eigen::VectorXd::Zero(8)});
  std::ostringstream out;
  write_trajectory_csv(out, rectangle_spec(), traj);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header,
            "t,E,T,V,p_1_x,p_1_y,p_2_x,p_2_y,p_3_x,p_3_y,p_4_x,p_4_y,"
            "v_1_x,v_1_y,v_2_x,v_2_y,v_3_x,v_3_y,v_4_x,v_4_y");
  EXPECT_EQ(row.substr(0, 14), "0,175,0,175,0,");
}

TEST(CsvTest, EnergyHeader) {
  std::ostringstream out;
  write_energy_csv(out, synthetic_trace(1.0, 1.0, 0.5, 2));
  EXPECT_EQ(out.str().substr(0, 8), "t,E,T,V\n");
}

}  // namespace
}  // namespace formation
