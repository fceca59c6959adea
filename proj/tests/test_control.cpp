#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dcgrid/control.hpp"
#include "support/seven_bus.hpp"

using namespace dcgrid;

namespace {

ControlLaw make_uniform_law(double theta = 0.5) {
  const MicrogridModel model = testing::seven_bus_model();
  return ControlLaw(model.net, model.graph, model.ratings,
                    ControllerConfig{SharingMode::Uniform, {}, theta, 1.0});
}

ControlLaw make_critical_law(double theta = 0.5, double omega = 2.0) {
  const MicrogridModel model = testing::seven_bus_model(SharingMode::Critical);
  return ControlLaw(model.net, model.graph, model.ratings,
                    ControllerConfig{SharingMode::Critical, model.partition,
                                     theta, omega});
}

}  // namespace

TEST_CASE("controller output is droop plus correction terms") {
  ControlLaw law = make_uniform_law(1.0);
  const Eigen::VectorXd v0 = Eigen::VectorXd::Constant(7, 380.0);
  ControllerState s = law.initial_state(v0);
  s.delta_i.setConstant(1.5);
  s.delta_v.setConstant(-0.5);
  const Eigen::VectorXd i = Eigen::VectorXd::Constant(7, 10.0);
  const Eigen::VectorXd u = law.output(s, i);
  for (int k = 0; k < 7; ++k)
    CHECK(u(k) == doctest::Approx(380.0 -
                                  law.ratings().droop_coefficient(k) * 10.0 +
                                  1.5 - 0.5));
  Eigen::VectorXd u2(7);
  law.output_into(s, i, u2);
  CHECK((u - u2).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("consensus derivative vanishes exactly at equal per-unit currents") {
  ControlLaw law = make_uniform_law(1.0);
  const Eigen::VectorXd v0 = Eigen::VectorXd::Constant(7, 380.0);
  ControllerState s = law.initial_state(v0);
  ControllerState d = s;
  // currents proportional to the references: identical per-unit loading
  const Eigen::VectorXd i = 0.5 * law.references();
  law.derivatives(s, i, Eigen::VectorXd::Zero(7), d);
  CHECK(d.delta_i.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("consensus derivative pushes overloaded nodes down") {
  ControlLaw law = make_uniform_law(1.0);
  const Eigen::VectorXd v0 = Eigen::VectorXd::Constant(7, 380.0);
  ControllerState s = law.initial_state(v0);
  ControllerState d = s;
  Eigen::VectorXd i = 0.5 * law.references();
  i(2) = 0.9 * law.references()(2);  // node 3 carries more than its share
  law.derivatives(s, i, Eigen::VectorXd::Zero(7), d);
  CHECK(d.delta_i(2) < 0.0);
  CHECK(d.delta_i.sum() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("observer tracks the average voltage in steady conditions") {
  ControlLaw law = make_uniform_law(0.5);
  Eigen::VectorXd v(7);
  v << 381, 379, 383, 377, 380, 382, 378;
  ControllerState s = law.initial_state(v);
  // initialized at the bus voltages, the estimator's total equals sum(V);
  // with dV = 0 the consensus drives every estimate to the average
  ControllerState d = s;
  law.derivatives(s, law.references(), Eigen::VectorXd::Zero(7), d);
  CHECK(d.v_est.sum() == doctest::Approx(0.0).epsilon(1e-9));  // invariant sum
  // voltage integrators move toward Vrat minus the current estimate
  for (int k = 0; k < 7; ++k)
    CHECK(d.delta_v(k) ==
          doctest::Approx(law.config().voltage_gain * (380.0 - s.v_est(k))));
}

TEST_CASE("critical law carries observer state only on critical nodes") {
  ControlLaw law = make_critical_law();
  CHECK(law.n_regulators() == 3);
  const Eigen::VectorXd v0 = Eigen::VectorXd::Constant(7, 380.0);
  const ControllerState s = law.initial_state(v0);
  CHECK(s.delta_v.size() == 3);
  CHECK(s.v_est.size() == 3);
  CHECK(s.delta_i.size() == 7);
}

TEST_CASE("critical references leave ordinary nodes at capacity") {
  ControlLaw law = make_critical_law(0.4, 2.0);
  const Eigen::VectorXd& i_r = law.references();
  const MicrogridModel model = testing::seven_bus_model(SharingMode::Critical);
  for (int i : model.partition.ordinary)
    CHECK(i_r(i) == model.ratings.current_capacity(i));
  for (int i : model.partition.critical)
    CHECK(i_r(i) != model.ratings.current_capacity(i));
}

TEST_CASE("full estimates relay critical observers to ordinary nodes") {
  ControlLaw law = make_critical_law();
  Eigen::VectorXd v(7);
  v << 381, 379, 383, 377, 380, 382, 378;
  ControllerState s = law.initial_state(v);
  s.v_est.setConstant(385.0);  // all observers agree
  const Eigen::VectorXd est = law.full_estimates(s);
  for (int i = 0; i < 7; ++i)
    CHECK(est(i) == doctest::Approx(385.0).epsilon(1e-10));
}

TEST_CASE("set-theta and set-omega events recompile the references") {
  ControlLaw law = make_uniform_law(1.0);
  const Eigen::VectorXd cap_refs = law.references();
  const Eigen::VectorXd v0 = Eigen::VectorXd::Constant(7, 380.0);
  ControllerState s = law.initial_state(v0);
  Event ev;
  ev.type = Event::Type::SetTheta;
  ev.value = 0.0;
  law.apply_event(ev, s, v0);
  const Eigen::VectorXd base_refs = law.references();
  CHECK((base_refs - 380.0 * law.network().load_conductance)
            .lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((cap_refs - base_refs).lpNorm<Eigen::Infinity>() > 1.0);

  ev.value = 1.5;
  CHECK_THROWS_AS(law.apply_event(ev, s, v0), ValidationError);
}

TEST_CASE("unplugging keeps consensus flowing through the relay node") {
  ControlLaw law = make_uniform_law(1.0);
  const Eigen::VectorXd v0 = Eigen::VectorXd::Constant(7, 380.0);
  ControllerState s = law.initial_state(v0);
  Event ev;
  ev.type = Event::Type::UnplugDg;
  ev.node = 5;  // interior node of the communication graph
  ev.relay_while_unplugged = true;
  law.apply_event(ev, s, v0);

  // remaining participants still exchange: a skewed current profile at the
  // plugged nodes produces nonzero consensus derivatives on both sides of
  // the relayed node
  ControllerState d = s;
  Eigen::VectorXd i = 0.5 * law.references();
  i(4) = 0.9 * law.references()(4);  // node 5, reachable only through node 6
  law.derivatives(s, i, Eigen::VectorXd::Zero(7), d);
  CHECK(d.delta_i(4) < 0.0);
  CHECK(d.delta_i(1) > 0.0);  // felt across the relay by node 6's neighbours
  CHECK(d.delta_i(6) > 0.0);
  CHECK(d.delta_i(5) == 0.0); // the unplugged DG's integrator is frozen
}

TEST_CASE("unplugging a cut node without relay disconnects the consensus") {
  ControlLaw law = make_uniform_law(1.0);
  const Eigen::VectorXd v0 = Eigen::VectorXd::Constant(7, 380.0);
  ControllerState s = law.initial_state(v0);
  Event ev;
  ev.type = Event::Type::UnplugDg;
  ev.node = 5;
  ev.relay_while_unplugged = false;  // node 6 goes fully dark
  CHECK_THROWS_AS(law.apply_event(ev, s, v0), DisconnectedGraph);
}

TEST_CASE("plug and unplug reset observers to the present bus voltages") {
  ControlLaw law = make_uniform_law(0.5);
  Eigen::VectorXd v(7);
  v << 381, 379, 383, 377, 380, 382, 378;
  ControllerState s = law.initial_state(Eigen::VectorXd::Constant(7, 380.0));
  s.v_est.setConstant(500.0);  // poison the estimates
  Event ev;
  ev.type = Event::Type::UnplugDg;
  ev.node = 2;
  law.apply_event(ev, s, v);
  for (int k = 0; k < 7; ++k) CHECK(s.v_est(k) == v(k));
}

TEST_CASE("set-load changes the conductance and the uniform base profile") {
  ControlLaw law = make_uniform_law(0.0);
  const Eigen::VectorXd v0 = Eigen::VectorXd::Constant(7, 380.0);
  ControllerState s = law.initial_state(v0);
  Event ev;
  ev.type = Event::Type::SetLoad;
  ev.node = 1;
  ev.value = 10.0;  // ohm
  law.apply_event(ev, s, v0);
  CHECK(law.network().load_conductance(1) == doctest::Approx(0.1));
  CHECK(law.references()(1) == doctest::Approx(38.0));
  ev.value = -5.0;
  CHECK_THROWS_AS(law.apply_event(ev, s, v0), ValidationError);
}

TEST_CASE("nonpositive references are rejected at rebuild") {
  // theta = 0 with an unloaded bus drives that reference to zero
  MicrogridModel model = testing::seven_bus_model(SharingMode::Critical);
  model.net.load_conductance(0) = 0.0;
  // critical omega small enough to push an I_b1 entry negative
  CHECK_THROWS_AS(
      ControlLaw(model.net, model.graph, model.ratings,
                 ControllerConfig{SharingMode::Critical, model.partition, 0.0,
                                  1e-6}),
      NonpositiveReference);
}
