#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dcgrid/analysis.hpp"
#include "dcgrid/control.hpp"
#include "support/seven_bus.hpp"

using namespace dcgrid;

namespace {

/// Steady state of the uniform-mode closed loop computed entirely through
/// the augmented-system oracle, bypassing every closed-form expression.
SteadyStateSolution uniform_oracle(const ElectricalNetwork& net,
                                   const DGRatings& ratings, double theta) {
  const Eigen::VectorXd i_b = ratings.rated_voltage * net.load_conductance;
  const Eigen::VectorXd i_r =
      theta * ratings.current_capacity + (1.0 - theta) * i_b;
  return steady_state_oracle(net, ratings, i_r, SharingMode::Uniform);
}

/// Same for the split mode: build I_r from I_b1 at the critical nodes and
/// solve the augmented system with the critical balance constraint.
SteadyStateSolution critical_oracle(const ElectricalNetwork& net,
                                    const DGRatings& ratings,
                                    const NodePartition& part, double theta,
                                    double omega) {
  const PartitionedAdmittance pa = partitioned_admittance(net, part);
  const Eigen::VectorXd ib1 = i_b1(pa, ratings, omega);
  Eigen::VectorXd i_r = ratings.current_capacity;
  for (int k = 0; k < part.m(); ++k) {
    const int node = part.critical[static_cast<std::size_t>(k)];
    i_r(node) = theta * ratings.current_capacity(node) + (1.0 - theta) * ib1(k);
  }
  return steady_state_oracle(net, ratings, i_r, SharingMode::Critical,
                             &part.critical);
}

}  // namespace

TEST_CASE("deviation report from a synthetic state") {
  Eigen::VectorXd v(3), i(3), cap(3);
  v << 380.0, 383.8, 372.4;
  i << 10.0, 20.0, 30.0;
  cap << 20.0, 40.0, 60.0;
  const DeviationReport r = DeviationReport::from_state(v, i, cap, 380.0);
  CHECK(r.delta_v(0) == doctest::Approx(0.0));
  CHECK(r.delta_v(1) == doctest::Approx(0.01));
  CHECK(r.delta_v(2) == doctest::Approx(-0.02));
  CHECK(r.mvdr == doctest::Approx(0.02));
  // per-unit currents are all 0.5: perfect sharing
  CHECK(r.mcdr == doctest::Approx(0.0));
  CHECK(r.delta_i.sum() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("conflict check flags mismatched capacity-to-load ratios") {
  MicrogridModel model = testing::seven_bus_model();
  const ConflictCheck c = conflict_check(model.net, model.ratings);
  CHECK_FALSE(c.compatible);
  // make all ratios equal: I*_i / Y_L,i = 1000 ohm ampere
  for (int i = 0; i < 7; ++i)
    model.net.load_conductance(i) = model.ratings.current_capacity(i) / 1000.0;
  CHECK(conflict_check(model.net, model.ratings).compatible);
  // an unloaded bus is always incompatible
  model.net.load_conductance(3) = 0.0;
  const ConflictCheck c2 = conflict_check(model.net, model.ratings);
  CHECK_FALSE(c2.compatible);
  CHECK(std::isinf(c2.ratios(3)));
}

TEST_CASE("uniform closed forms match the augmented-system oracle") {
  std::mt19937 rng(20240601);
  for (int trial = 0; trial < 8; ++trial) {
    const ElectricalNetwork net = testing::random_network(rng, 7);
    const DGRatings ratings = testing::random_ratings(rng, 7);
    const UniformSteadyState ss = uniform_steady(net, ratings);
    for (double theta : {0.0, 0.2, 0.5, 0.8, 1.0}) {
      const SteadyStateSolution sol = uniform_oracle(net, ratings, theta);
      const Eigen::VectorXd dv_closed = uniform_delta_v(ss, theta);
      const Eigen::VectorXd dv_oracle =
          (sol.v_bus.array() - ratings.rated_voltage) / ratings.rated_voltage;
      CHECK((dv_closed - dv_oracle).lpNorm<Eigen::Infinity>() < 1e-10);
      CHECK(uniform_alpha(ss, theta) == doctest::Approx(sol.alpha).epsilon(1e-10));

      const DeviationReport rep = DeviationReport::from_state(
          sol.v_bus, sol.i_conv, ratings.current_capacity, ratings.rated_voltage);
      const Eigen::VectorXd di_closed = uniform_delta_i(ss, theta);
      CHECK((di_closed - rep.delta_i).lpNorm<Eigen::Infinity>() < 1e-10);
    }
  }
}

TEST_CASE("uniform deviation profiles are monotone in theta") {
  std::mt19937 rng(99887);
  for (int trial = 0; trial < 5; ++trial) {
    const ElectricalNetwork net = testing::random_network(rng, 6);
    const DGRatings ratings = testing::random_ratings(rng, 6);
    const UniformSteadyState ss = uniform_steady(net, ratings);
    double prev_v = -1.0, prev_i = 2.0;
    for (int k = 0; k <= 20; ++k) {
      const double theta = k / 20.0;
      const double mv = uniform_delta_v(ss, theta).lpNorm<Eigen::Infinity>();
      const double mi = uniform_delta_i(ss, theta).lpNorm<Eigen::Infinity>();
      CHECK(mv >= prev_v - 1e-12);   // MVDR grows with theta
      CHECK(mi <= prev_i + 1e-12);   // MCDR shrinks with theta
      prev_v = mv;
      prev_i = mi;
    }
    // endpoints: theta = 0 regulates voltage exactly, theta = 1 shares exactly
    CHECK(uniform_delta_v(ss, 0.0).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(uniform_delta_i(ss, 1.0).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("uniform trade-off design hits the voltage bound exactly") {
  std::mt19937 rng(5150);
  for (int trial = 0; trial < 8; ++trial) {
    const ElectricalNetwork net = testing::random_network(rng, 7);
    const DGRatings ratings = testing::random_ratings(rng, 7);
    const UniformSteadyState ss = uniform_steady(net, ratings);
    const double endpoint = uniform_delta_v(ss, 1.0).lpNorm<Eigen::Infinity>();
    for (double frac : {0.1, 0.5, 0.9}) {
      const double gamma = frac * endpoint;
      const double theta_d = design_theta_uniform(ss, gamma);
      CHECK(theta_d > 0.0);
      CHECK(theta_d < 1.0);
      CHECK(uniform_delta_v(ss, theta_d).lpNorm<Eigen::Infinity>() ==
            doctest::Approx(gamma).epsilon(1e-10));
    }
    CHECK(design_theta_uniform(ss, 0.0) == 0.0);
    CHECK(design_theta_uniform(ss, 2.0 * endpoint) == 1.0);
    // the boundary case gamma == endpoint resolves to theta = 1
    CHECK(design_theta_uniform(ss, endpoint) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("uniform mode with proportional loads has zero deviations everywhere") {
  // when loads are exactly proportional to capacities the conflict vanishes:
  // Psi = 0 and Delta_b = 0, so both deviations are zero for every theta
  MicrogridModel model = testing::seven_bus_model();
  for (int i = 0; i < 7; ++i)
    model.net.load_conductance(i) = model.ratings.current_capacity(i) / 950.0;
  REQUIRE(conflict_check(model.net, model.ratings).compatible);
  const UniformSteadyState ss = uniform_steady(model.net, model.ratings);
  CHECK(ss.psi.lpNorm<Eigen::Infinity>() < 1e-12);
  for (double theta : {0.0, 0.3, 1.0}) {
    CHECK(uniform_delta_v(ss, theta).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(uniform_delta_i(ss, theta).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("critical closed forms match the augmented-system oracle") {
  std::mt19937 rng(314159);
  for (int trial = 0; trial < 6; ++trial) {
    const ElectricalNetwork net = testing::random_network(rng, 7);
    const DGRatings ratings = testing::random_ratings(rng, 7);
    const NodePartition part = NodePartition::from_critical({1, 3, 6}, 7);
    const PartitionedAdmittance pa = partitioned_admittance(net, part);
    for (double omega : {1.0, 1.8, 2.5}) {
      const CriticalSteadyState css = critical_steady(pa, ratings, omega);
      for (double theta : {0.0, 0.4, 1.0}) {
        const SteadyStateSolution sol =
            critical_oracle(net, ratings, part, theta, omega);
        const Eigen::VectorXd dv_closed = critical_delta_v(css, theta);
        Eigen::VectorXd dv_oracle(part.m());
        for (int k = 0; k < part.m(); ++k)
          dv_oracle(k) = (sol.v_bus(part.critical[static_cast<std::size_t>(k)]) -
                          ratings.rated_voltage) /
                         ratings.rated_voltage;
        CHECK((dv_closed - dv_oracle).lpNorm<Eigen::Infinity>() < 1e-9);
        CHECK(critical_alpha(css, theta) ==
              doctest::Approx(sol.alpha).epsilon(1e-10));

        // per-unit currents at critical nodes
        const Eigen::VectorXd ipu_closed = critical_ipu1(css, theta);
        for (int k = 0; k < part.m(); ++k) {
          const int node = part.critical[static_cast<std::size_t>(k)];
          CHECK(ipu_closed(k) ==
                doctest::Approx(sol.i_conv(node) / ratings.current_capacity(node))
                    .epsilon(1e-9));
        }

        // ordinary-node voltages
        const Eigen::VectorXd v2_closed = ordinary_voltages(css, theta);
        for (std::size_t k = 0; k < part.ordinary.size(); ++k)
          CHECK(v2_closed(static_cast<Eigen::Index>(k)) ==
                doctest::Approx(sol.v_bus(part.ordinary[k])).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("critical trade-off design hits the voltage bound exactly") {
  std::mt19937 rng(60601);
  for (int trial = 0; trial < 6; ++trial) {
    const ElectricalNetwork net = testing::random_network(rng, 7);
    const DGRatings ratings = testing::random_ratings(rng, 7);
    const NodePartition part = NodePartition::from_critical({0, 2, 5}, 7);
    const PartitionedAdmittance pa = partitioned_admittance(net, part);
    const CriticalSteadyState css = critical_steady(pa, ratings, 2.0);
    const double endpoint = critical_delta_v(css, 1.0).lpNorm<Eigen::Infinity>();
    for (double frac : {0.2, 0.6}) {
      const double gamma = frac * endpoint;
      const double theta_d = design_theta_critical(css, gamma);
      CHECK(theta_d > 0.0);
      CHECK(theta_d < 1.0);
      CHECK(critical_delta_v(css, theta_d).lpNorm<Eigen::Infinity>() ==
            doctest::Approx(gamma).epsilon(1e-9));
    }
  }
}

TEST_CASE("omega scales the critical base currents into feasibility") {
  const MicrogridModel model = testing::seven_bus_model(SharingMode::Critical);
  const PartitionedAdmittance pa =
      partitioned_admittance(model.net, model.partition);
  const CriticalSteadyState css = critical_steady(pa, model.ratings, 2.0);
  const OmegaRange range = omega_range(css, 0.0);
  CHECK(range.omega_min > 0.0);

  // at omega slightly above the bound every reference current is positive;
  // slightly below, at least one goes nonpositive
  auto min_ref = [&](double omega) {
    const Eigen::VectorXd ib = i_b1(pa, model.ratings, omega);
    return ib.minCoeff();  // theta = 0: references equal I_b1 at critical nodes
  };
  CHECK(min_ref(range.omega_min * 1.001) > 0.0);
  CHECK(min_ref(range.omega_min * 0.999) < 0.0);
}

TEST_CASE("omega range respects theta and rejects bad arguments") {
  const MicrogridModel model = testing::seven_bus_model(SharingMode::Critical);
  const PartitionedAdmittance pa =
      partitioned_admittance(model.net, model.partition);
  const CriticalSteadyState css = critical_steady(pa, model.ratings, 2.0);
  // raising theta relaxes the bound (capacity contributes positively)
  const double w0 = omega_range(css, 0.0).omega_min;
  const double w5 = omega_range(css, 0.5).omega_min;
  CHECK(w5 <= w0);
  CHECK_THROWS_AS(omega_range(css, 1.0), ValidationError);
  CHECK_THROWS_AS(critical_steady(pa, model.ratings, -1.0), ValidationError);
  CHECK_THROWS_AS(critical_delta_v(css, 1.5), ValidationError);
}

TEST_CASE("uniform mode requires every bus to carry a load") {
  MicrogridModel model = testing::seven_bus_model();
  model.net.load_conductance(2) = 0.0;
  CHECK_THROWS_AS(uniform_steady(model.net, model.ratings), AssumptionViolation);
}

TEST_CASE("reference currents blend capacity and base profiles") {
  const MicrogridModel model = testing::seven_bus_model();
  ControllerConfig cfg;
  cfg.mode = SharingMode::Uniform;
  const Eigen::VectorXd i_b =
      model.ratings.rated_voltage * model.net.load_conductance;

  cfg.theta = 1.0;
  CHECK((reference_currents(cfg, model.ratings, i_b) -
         model.ratings.current_capacity)
            .lpNorm<Eigen::Infinity>() < 1e-12);
  cfg.theta = 0.0;
  CHECK((reference_currents(cfg, model.ratings, i_b) - i_b)
            .lpNorm<Eigen::Infinity>() < 1e-12);
  cfg.theta = 0.3;
  const Eigen::VectorXd blended = reference_currents(cfg, model.ratings, i_b);
  for (int i = 0; i < 7; ++i)
    CHECK(blended(i) == doctest::Approx(0.3 * model.ratings.current_capacity(i) +
                                        0.7 * i_b(i)));
}
