#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "abflux/classical.hpp"

using namespace abflux;
using namespace abflux::classical;

namespace {

const FluxParams kHalf{0.5};

PhaseState with_velocity(double s, Vec2 q, Vec2 v, const FluxParams& params) {
  return {s, q, v + vector_potential(s, q, params)};
}

// Generic initial data away from the flux line.
std::vector<PhaseState> generic_states() {
  return {with_velocity(0.0, {1.3, -0.4}, {0.7, 1.1}, kHalf),
          with_velocity(0.0, {-2.0, 0.5}, {-0.3, 0.9}, kHalf),
          with_velocity(0.0, {0.6, 2.2}, {1.5, -0.2}, kHalf)};
}

PhaseState random_state(std::mt19937& rng) {
  std::uniform_real_distribution<double> pos(-3.0, 3.0), mom(-2.0, 2.0), time(-5.0, 5.0);
  PhaseState st;
  do {
    st.q = {pos(rng), pos(rng)};
  } while (norm(st.q) < 0.2);
  st.p = {mom(rng), mom(rng)};
  st.s = time(rng);
  return st;
}

}  // namespace

TEST(VectorPotential, Examples) {
  const Vec2 a = vector_potential(0.0, {1.0, 0.0}, {0.7});
  EXPECT_DOUBLE_EQ(a.x, 0.0);
  EXPECT_DOUBLE_EQ(a.y, 0.5);
  const Vec2 b = vector_potential(13.0, {1.0, 0.0}, {0.0});
  EXPECT_DOUBLE_EQ(b.x, 0.0);
  EXPECT_DOUBLE_EQ(b.y, 0.5);
  const Vec2 c = vector_potential(2.0, {0.0, 1.0}, kHalf);
  EXPECT_DOUBLE_EQ(c.x, 0.5);
  EXPECT_DOUBLE_EQ(c.y, 0.0);
  EXPECT_THROW(vector_potential(1.0, {0.0, 0.0}, kHalf), SingularityError);
}

TEST(Hamiltonian, Examples) {
  const Vec2 q{0.8, -1.1};
  PhaseState st{1.7, q, vector_potential(1.7, q, kHalf)};
  EXPECT_EQ(hamiltonian(st, kHalf), 0.0);
  EXPECT_DOUBLE_EQ(hamiltonian({0.0, {1.0, 0.0}, {0.0, 1.5}}, kHalf), 0.5);
  std::mt19937 rng(7);
  for (int i = 0; i < 100; ++i) {
    const auto r = random_state(rng);
    const auto d = to_guiding_center(r, kHalf);
    EXPECT_DOUBLE_EQ(hamiltonian(r, kHalf), 0.5 * norm2(d.v));
    EXPECT_GE(hamiltonian(r, kHalf), 0.0);
  }
  EXPECT_THROW(hamiltonian({0.0, {0.0, 0.0}, {1.0, 0.0}}, kHalf), SingularityError);
}

TEST(FlowRhs, PositionDerivativeIsVelocity) {
  std::mt19937 rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto st = random_state(rng);
    const auto d = flow_rhs(st, kHalf);
    const Vec2 v = velocity(st, kHalf);
    EXPECT_EQ(d.dq.x, v.x);
    EXPECT_EQ(d.dq.y, v.y);
  }
}

TEST(FlowRhs, MomentumDerivativeMatchesFiniteDifferences) {
  std::mt19937 rng(12);
  const double h = 1e-5;
  for (int i = 0; i < 100; ++i) {
    const auto st = random_state(rng);
    auto shifted = [&](double dx, double dy) {
      PhaseState t = st;
      t.q.x += dx;
      t.q.y += dy;
      return hamiltonian(t, kHalf);
    };
    const Vec2 grad{(shifted(h, 0) - shifted(-h, 0)) / (2 * h),
                    (shifted(0, h) - shifted(0, -h)) / (2 * h)};
    const auto d = flow_rhs(st, kHalf);
    const double mag = norm(grad);
    EXPECT_LE(norm(d.dp + grad), 1e-6 * (1.0 + mag)) << i;
  }
  EXPECT_THROW(flow_rhs({0.0, {0.0, 0.0}, {1.0, 0.0}}, kHalf), SingularityError);
}

TEST(FlowRhs, ZeroFluxIsUniformCyclotronRotation) {
  // With phi = 0 the velocity obeys v' = -v_perp.
  const FluxParams zero{0.0};
  std::mt19937 rng(13);
  for (int i = 0; i < 20; ++i) {
    const auto st = random_state(rng);
    const auto d = flow_rhs(st, zero);
    const Vec2 v = velocity(st, zero);
    const Vec2 dv = d.dp - 0.5 * perp(d.dq);  // da/ds = (1/2) (dq)_perp
    EXPECT_NEAR(dv.x, -perp(v).x, 1e-14);
    EXPECT_NEAR(dv.y, -perp(v).y, 1e-14);
  }
}

TEST(Integrate, ZeroFluxCircleMatchesClosedForm) {
  const FluxParams zero{0.0};
  const Vec2 q0{1.0, 0.0}, v0{0.0, 1.0};
  const auto init = with_velocity(0.0, q0, v0, zero);
  const Vec2 c0 = q0 - perp(v0);
  IntegrateOptions opt;
  opt.tol = 1e-12;
  opt.samples = 401;
  const auto traj = integrate(init, 4.0 * std::numbers::pi, zero, opt);
  ASSERT_EQ(traj.states.size(), 401u);
  for (const auto& st : traj.states) {
    const double c = std::cos(st.s), s = std::sin(st.s);
    const Vec2 v{c * v0.x + s * v0.y, -s * v0.x + c * v0.y};  // rotation by -s
    const Vec2 q = c0 + perp(v);
    EXPECT_LE(norm(st.q - q), 1e-9) << st.s;
    EXPECT_NEAR(norm(st.q - c0), 1.0, 10 * opt.tol * 100);
    EXPECT_NEAR(hamiltonian(st, zero), 0.5, 1e-10);
    const auto d = to_guiding_center(st, zero);
    EXPECT_NEAR(norm(d.c), norm(c0), 1e-10);
  }
}

TEST(Integrate, EmptySpanReturnsInitialState) {
  const auto init = generic_states()[0];
  const auto traj = integrate(init, init.s, kHalf);
  ASSERT_EQ(traj.states.size(), 1u);
  EXPECT_EQ(traj.states[0].q.x, init.q.x);
  EXPECT_EQ(traj.states[0].p.y, init.p.y);
  EXPECT_EQ(traj.steps, 0);
}

TEST(Integrate, InvalidInputs) {
  const auto init = generic_states()[0];
  IntegrateOptions opt;
  opt.tol = 1e-5;
  EXPECT_THROW(integrate(init, 1.0, kHalf, opt), DomainError);
  opt.tol = 1e-14;
  EXPECT_THROW(integrate(init, 1.0, kHalf, opt), DomainError);
  EXPECT_THROW(integrate(init, 1.0, FluxParams{-0.1}), DomainError);
  EXPECT_THROW(integrate({0.0, {0.0, 0.0}, {1.0, 0.0}}, 1.0, kHalf), SingularityError);
  IntegrateOptions bad;
  bad.sample_times = {0.0, 0.5, 0.4, 1.0};
  EXPECT_THROW(integrate(init, 1.0, kHalf, bad), DomainError);
}

TEST(Integrate, PunctureHitIsReportedAsEvent) {
  // At phi = 0 the circle through c = (1/2, 0) with radius 1/2 crosses q = 0.
  const FluxParams zero{0.0};
  const auto init = with_velocity(0.0, {1.0, 0.0}, {0.0, -0.5}, zero);
  IntegrateOptions opt;
  opt.r_guard = 0.05;
  const auto traj = integrate(init, 10.0, zero, opt);
  ASSERT_TRUE(traj.puncture_time.has_value());
  EXPECT_GT(*traj.puncture_time, 0.0);
  EXPECT_LT(*traj.puncture_time, std::numbers::pi + 0.1);
  for (const auto& st : traj.states) {
    EXPECT_LE(st.s, *traj.puncture_time);
    EXPECT_GE(norm(st.q), opt.r_guard);
  }
}

TEST(GuidingCenter, Examples) {
  const auto d = to_guiding_center(with_velocity(0.0, {1.0, 0.0}, {0.0, 1.0}, kHalf), kHalf);
  EXPECT_NEAR(d.c.x, 2.0, 1e-15);
  EXPECT_NEAR(d.c.y, 0.0, 1e-15);
  EXPECT_NEAR(d.I1, 2.0, 1e-15);
  EXPECT_NEAR(d.I2, 0.5, 1e-15);

  const Vec2 q{0.3, -1.2};
  const auto z = to_guiding_center(with_velocity(2.0, q, {0.0, 0.0}, kHalf), kHalf);
  EXPECT_EQ(z.I2, 0.0);
  EXPECT_NEAR(z.c.x, q.x, 1e-15);
  EXPECT_NEAR(z.c.y, q.y, 1e-15);
  EXPECT_EQ(z.phi2, 0.0);
}

TEST(GuidingCenter, ReconstructionProperty) {
  std::mt19937 rng(17);
  for (int i = 0; i < 1000; ++i) {
    const auto st = random_state(rng);
    const auto d = to_guiding_center(st, kHalf);
    const Vec2 q1 = d.c + perp(d.v);
    const Vec2 q2 = d.reconstruct();
    EXPECT_LE(norm(q1 - st.q), 1e-12 * norm(st.q));
    EXPECT_LE(norm(q2 - st.q), 1e-12 * (norm(d.c) + norm(d.v)));
    EXPECT_EQ(d.I1, 0.5 * norm2(d.c));
    EXPECT_EQ(d.I2, 0.5 * norm2(d.v));
  }
}

TEST(MotionConstant, EqualsEnergyMinusPhiTimesPolarAngle) {
  std::mt19937 rng(19);
  for (int i = 0; i < 50; ++i) {
    const auto st = random_state(rng);
    const auto d = to_guiding_center(st, kHalf);
    const auto m = motion_constant(d, kHalf);
    EXPECT_NEAR(m.K, hamiltonian(st, kHalf) - 0.5 * arg(st.q), 1e-12);
  }
  const auto st = random_state(rng);
  const auto m0 = motion_constant(to_guiding_center(st, {0.0}), {0.0});
  EXPECT_DOUBLE_EQ(m0.K, hamiltonian(st, {0.0}));
}

TEST(MotionConstant, BranchContinuationAndBranchError) {
  const auto d = to_guiding_center(with_velocity(0.0, {-1.0, 1e-3}, {0.1, 0.2}, kHalf), kHalf);
  const auto first = motion_constant(d, kHalf);
  const auto e = to_guiding_center(with_velocity(0.0, {-1.0, -1e-3}, {0.1, 0.2}, kHalf), kHalf);
  // crossing the negative axis continues past pi instead of jumping
  const auto cont = motion_constant(e, kHalf, first.branch);
  EXPECT_GT(cont.branch.angle, std::numbers::pi);
  const auto far = to_guiding_center(with_velocity(0.0, {1.0, 0.0}, {0.1, 0.2}, kHalf), kHalf);
  EXPECT_THROW(motion_constant(far, kHalf, first.branch), BranchError);
}

TEST(MotionConstant, ConservedAlongTrajectories) {
  for (const auto& init : generic_states()) {
    IntegrateOptions opt;
    opt.tol = 1e-12;
    opt.samples = 5001;
    const auto traj = integrate(init, 100.0, kHalf, opt);
    ASSERT_FALSE(traj.puncture_time);
    const auto k = motion_constants(traj, kHalf);
    EXPECT_LE(motion_constant_drift(traj, kHalf), 1e-8 * (1.0 + std::abs(k.front())));

    // step-level winding agrees with sample-by-sample branch continuation
    std::optional<BranchDatum> branch;
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
      const auto m = motion_constant(to_guiding_center(traj.states[i], kHalf), kHalf, branch);
      branch = m.branch;
      EXPECT_NEAR(m.K, k[i], 1e-9);
    }
  }
}

TEST(MotionConstant, DriftScalesWithTolerance) {
  // calibrated bound C <= 1e4 in max|K - K0| <= C tol (1 + |K0|)
  const auto init = generic_states()[1];
  for (double tol : {1e-8, 1e-10, 1e-12}) {
    IntegrateOptions opt;
    opt.tol = tol;
    opt.samples = 2001;
    const auto traj = integrate(init, 100.0, kHalf, opt);
    const double k0 = motion_constants(traj, kHalf).front();
    EXPECT_LE(motion_constant_drift(traj, kHalf), 1e4 * tol * (1.0 + std::abs(k0))) << tol;
  }
}

TEST(CenterEnergy, RelationHoldsAlongTrajectories) {
  for (const auto& init : generic_states()) {
    IntegrateOptions opt;
    opt.tol = 1e-12;
    opt.samples = 2001;
    const auto traj = integrate(init, 100.0, kHalf, opt);
    const auto fit = center_energy_fit(traj.states, kHalf);
    EXPECT_NEAR(fit.slope / kHalf.phi, 1.0, 1e-8);
    EXPECT_LE(fit.max_residual, 1e-8);
    EXPECT_LE(fit.max_residual, 1e2 * opt.tol * (1.0 + 100.0));
  }
}

TEST(CenterEnergy, RecoversPlantedConstant) {
  // |c|^2/2 - |v|^2/2 = phi (s - 3): pick v, then size c accordingly
  std::vector<PhaseState> states;
  for (int i = 0; i < 50; ++i) {
    const double s = 3.5 + 0.2 * i;
    const Vec2 v = 0.8 * unit(0.37 * i);
    const double c_len = std::sqrt(2.0 * (kHalf.phi * (s - 3.0) + 0.5 * norm2(v)));
    const Vec2 c = c_len * unit(1.1 * i);
    states.push_back(with_velocity(s, c + perp(v), v, kHalf));
  }
  const auto fit = center_energy_fit(states, kHalf);
  EXPECT_NEAR(fit.s0, 3.0, 1e-10);
  EXPECT_NEAR(fit.slope, kHalf.phi, 1e-10);
  EXPECT_LE(fit.max_residual, 1e-12);
  EXPECT_THROW(center_energy_fit(states, {0.0}), DomainError);
  EXPECT_THROW(center_energy_fit(std::span(states).first(5), kHalf), DomainError);
}

TEST(Asymptotics, ForwardAndBackward) {
  const auto init = generic_states()[0];
  IntegrateOptions opt;
  opt.tol = 1e-12;
  opt.samples = 20001;
  const auto fwd = integrate(init, 1e4, kHalf, opt);
  ASSERT_FALSE(fwd.puncture_time);
  const auto f = asymptotics_forward(fwd, kHalf);
  EXPECT_NEAR(f.radius_ratio, 1.0, 0.02);
  EXPECT_LE(f.energy_deviation, 0.02);
  EXPECT_LE(f.drift_residual, 0.05);
  EXPECT_GT(f.a0, 0.0);

  opt.samples = 2001;
  const auto bwd = integrate(init, -1e3, kHalf, opt);
  ASSERT_FALSE(bwd.puncture_time);
  const auto b = asymptotics_backward(bwd, kHalf);
  EXPECT_NEAR(b.energy_ratio, 1.0, 0.02);
  EXPECT_NEAR(b.radius_ratio, 1.0, 0.05);

  const auto short_run = integrate(init, 100.0, kHalf);
  EXPECT_THROW(asymptotics_forward(short_run, kHalf), DomainError);
  EXPECT_THROW(asymptotics_backward(short_run, kHalf), DomainError);
}
