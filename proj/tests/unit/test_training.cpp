#include "gradcheck.hpp"
#include "pisoc/training.hpp"

#include <doctest.h>

#include <cmath>

using namespace pisoc;
using testing::random_matrix;

namespace {

void randomize(ControlFunction& c, std::uint64_t seed, double scale) {
  for (Matrix& p : c.parameters()) p = random_matrix(p.rows(), p.cols(), seed++, -scale, scale);
}

// Largest relative deviation between the taped gradient of the coarse loss
// and central differences of the plain loss on the same frozen noise.
double pipeline_gradient_error(const ModelSystem& system, const ControlFunction& ctrl,
                               const BoundaryDistribution* boundary, const TrainConfig& cfg) {
  const TimeGrid grid = build_time_grid(system.beta(), cfg.K_train, cfg.scheme);
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Matrix& p : ctrl.parameters()) vars.push_back(tape.variable(p));
  const ad::Var loss = record_loss(tape, vars, system, ctrl, boundary, cfg, grid, 3);
  tape.backward(loss);

  std::vector<Matrix> params = ctrl.parameters();
  CHECK(evaluate_loss(params, system, ctrl, boundary, cfg, grid, 3) ==
        doctest::Approx(loss.value()(0, 0)).epsilon(1e-12));
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix g = tape.grad(vars[i]);
    for (Eigen::Index j = 0; j < params[i].size(); ++j) {
      const double keep = params[i].data()[j];
      params[i].data()[j] = keep + h;
      const double up = evaluate_loss(params, system, ctrl, boundary, cfg, grid, 3);
      params[i].data()[j] = keep - h;
      const double down = evaluate_loss(params, system, ctrl, boundary, cfg, grid, 3);
      params[i].data()[j] = keep;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(g.data()[j] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

TrainConfig propagator_config(double x) {
  TrainConfig cfg;
  cfg.x0 = Vector::Constant(1, x);
  cfg.xT = cfg.x0;
  cfg.K_train = 16;
  cfg.K_eval = 64;
  cfg.B_train = 8;
  cfg.B_validate = 512;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("propagator loss gradient matches central differences") {
  const auto osc = ModelSystem::anharmonic(1.0, 1.0);
  auto ctrl = ControlFunction::with_mlp(osc.geometry(), 2.5e-3, {5}, 1);
  randomize(ctrl, 40, 0.5);
  CHECK(pipeline_gradient_error(osc, ctrl, nullptr, propagator_config(0.8)) < 1e-4);
}

TEST_CASE("free-energy loss gradient matches central differences") {
  const auto rotor = ModelSystem::rotor_chain(3, 1.0, 2.0);
  const auto p = BoundaryDistribution::for_system(rotor);
  auto ctrl = ControlFunction::with_birecurrent(rotor.geometry(), 2.5e-3, 3, 1);
  randomize(ctrl, 60, 0.5);
  TrainConfig cfg;
  cfg.objective = Objective::FreeEnergy;
  cfg.K_train = 16;
  cfg.K_eval = 64;
  cfg.B_train = 8;
  cfg.M_train = 4;
  cfg.seed = 9;
  CHECK(pipeline_gradient_error(rotor, ctrl, &p, cfg) < 1e-4);
}

TEST_CASE("non-finite gradients never reach the parameters") {
  const auto osc = ModelSystem::anharmonic(1.0, 1.0);
  const auto ctrl = ControlFunction::with_mlp(osc.geometry(), 2.5e-3, {4}, 2);
  TrainConfig cfg = propagator_config(0.5);
  cfg.epochs = 6;
  cfg.validate_every = 2;
  int calls = 0;
  cfg.gradient_hook = [&](int, std::vector<Matrix>& grads) {
    ++calls;
    grads[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  };
  const TrainResult r = train(osc, ctrl, nullptr, cfg);
  CHECK(calls == 6);
  CHECK(r.skipped_steps == 6);
  for (std::size_t i = 0; i < ctrl.parameters().size(); ++i)
    CHECK((r.best.parameters()[i] - ctrl.parameters()[i]).norm() == 0.0);
}

TEST_CASE("training is deterministic and keeps the best validated control") {
  const auto osc = ModelSystem::anharmonic(1.0, 1.0);
  const auto ctrl = ControlFunction::with_mlp(osc.geometry(), 2.5e-3, {8}, 3);
  TrainConfig cfg = propagator_config(1.0);
  cfg.B_train = 32;
  cfg.epochs = 40;
  cfg.validate_every = 5;
  cfg.step_size = 1e-2;
  const TrainResult a = train(osc, ctrl, nullptr, cfg);
  const TrainResult b = train(osc, ctrl, nullptr, cfg);
  CHECK(a.best_loss == b.best_loss);
  REQUIRE(a.curve.size() == 41);
  for (std::size_t i = 1; i < a.curve.size(); ++i) CHECK(a.curve[i].coarse_loss == b.curve[i].coarse_loss);
  for (std::size_t i = 1; i < a.best_history.size(); ++i) CHECK(a.best_history[i] < a.best_history[i - 1]);
  CHECK(a.best_history.back() == a.best_loss);
  CHECK(a.checkpoint.at("metadata").at("validated_loss") == a.best_loss);
  CHECK(ControlFunction::from_checkpoint(a.checkpoint).drift(Matrix::Constant(1, 1, 0.3), Matrix::Constant(1, 1, 1.0),
                                                            0.2, 1.0)(0, 0) ==
        a.best.drift(Matrix::Constant(1, 1, 0.3), Matrix::Constant(1, 1, 1.0), 0.2, 1.0)(0, 0));
}

TEST_CASE("the exact bridge needs no correction without a potential") {
  const auto free = ModelSystem::free_particle(1, 1.0);
  const auto ctrl = ControlFunction::with_mlp(free.geometry(), 2.5e-3, {8}, 4);
  TrainConfig cfg = propagator_config(0.3);
  cfg.xT = Vector::Constant(1, -0.4);
  cfg.K_train = 32;
  cfg.B_train = 64;
  cfg.epochs = 100;
  cfg.validate_every = 100;
  cfg.step_size = 1e-3;
  const TrainResult r = train(free, ctrl, nullptr, cfg);
  const ControlFunction trained = ControlFunction::from_checkpoint(r.checkpoint);
  const ControlFunction bridge(free.geometry(), 2.5e-3);
  const Matrix x = random_matrix(200, 1, 7, -1.5, 1.5);
  const Matrix z = Matrix::Constant(200, 1, -0.4);
  double worst = 0.0;
  for (double t : {0.0, 0.3, 0.6, 0.9}) {
    const Matrix d = trained.drift(x, z, t, 1.0) - bridge.drift(x, z, t, 1.0);
    worst = std::max(worst, std::sqrt(d.squaredNorm() / 200.0));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("trained control tightens the propagator bound") {
  const auto osc = ModelSystem::anharmonic(5.0, 5.0);
  const auto ctrl = ControlFunction::with_mlp(osc.geometry(), 2.5e-3, {16, 16}, 6);
  TrainConfig cfg = propagator_config(1.0);
  cfg.K_train = 32;
  cfg.K_eval = 128;
  cfg.B_train = 128;
  cfg.B_validate = 2048;
  cfg.epochs = 150;
  cfg.validate_every = 25;
  cfg.step_size = 3e-3;
  const TrainResult r = train(osc, ctrl, nullptr, cfg);
  ControlFunction bridge = ctrl;
  bridge.set_endpoint(cfg.xT);
  const Validation before = validate(osc, bridge, nullptr, cfg, 77);
  const Validation after = validate(osc, r.best, nullptr, cfg, 77);
  CHECK(after.variational.value < before.variational.value - 4.0 * before.variational.std_error);
  CHECK(after.gap < 0.5 * before.gap);
  CHECK(after.gap > -4.0 * after.gap_std_error);
}

TEST_CASE("training configuration checks") {
  const auto osc = ModelSystem::anharmonic(1.0, 1.0);
  const auto ctrl = ControlFunction::with_mlp(osc.geometry(), 2.5e-3, {4}, 2);
  TrainConfig cfg = propagator_config(0.5);
  cfg.K_train = 128;
  CHECK_THROWS_AS(train(osc, ctrl, nullptr, cfg), Error);
  cfg = propagator_config(0.5);
  cfg.objective = Objective::FreeEnergy;
  CHECK_THROWS_AS(train(osc, ctrl, nullptr, cfg), Error);
  cfg = propagator_config(0.5);
  cfg.step_size = 0.0;
  CHECK_THROWS_AS(train(osc, ctrl, nullptr, cfg), Error);
}
