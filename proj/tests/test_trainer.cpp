#include <doctest.h>

#include <cmath>

#include "memprobe/error.hpp"
#include "memprobe/synthetic.hpp"
#include "memprobe/trainer.hpp"
#include "oracles.hpp"

using namespace memprobe;

namespace {

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d) {
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) data.push_back(oracle::random_vector(rng, d));
  return data;
}

// Worst relative error between backprop and central differences over every
// parameter.
double gradient_check(const Model& model, const Dataset& batch, double h = 1e-6) {
  const auto grads = backprop_gradients(model, batch);
  Model probe = model;
  auto blocks = parameter_blocks(probe);
  REQUIRE(blocks.size() == grads.size());
  double worst = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    REQUIRE(blocks[b].size() == grads[b].size());
    for (std::size_t j = 0; j < blocks[b].size(); ++j) {
      const double orig = blocks[b][j];
      blocks[b][j] = orig + h;
      const double plus = mse_loss(probe, batch);
      blocks[b][j] = orig - h;
      const double minus = mse_loss(probe, batch);
      blocks[b][j] = orig;
      const double fd = (plus - minus) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(grads[b][j]), 1e-6});
      worst = std::max(worst, std::abs(fd - grads[b][j]) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("mse_loss examples") {
  Rng rng(1);
  const Dataset data = random_dataset(rng, 4, 6);
  const Model identity = TiedAutoencoder{Matrix::identity(6), Activation::identity()};
  CHECK(mse_loss(identity, data) == 0.0);

  const Model zero = TiedAutoencoder{Matrix(3, 6), Activation::leaky_relu(0.1)};
  double want = 0.0;
  for (const auto& x : data)
    for (double v : x) want += v * v;
  want /= 4.0 * 6.0;
  CHECK(mse_loss(zero, data) == doctest::Approx(want).epsilon(1e-14));

  Rng mr(2);
  const Model deep = make_fc_autoencoder(std::vector<std::size_t>{6, 4, 6}, Activation::softplus(), mr);
  double naive = 0.0;
  for (const auto& x : data) {
    const Vector y = forward(deep, x);
    for (std::size_t i = 0; i < 6; ++i) naive += (y[i] - x[i]) * (y[i] - x[i]);
  }
  naive /= 24.0;
  CHECK(std::abs(mse_loss(deep, data) - naive) <= 1e-15);
  CHECK_THROWS(mse_loss(deep, Dataset{}));
  CHECK_THROWS_AS(mse_loss(deep, Dataset{Vector(5, 0.0)}), DimensionError);
}

TEST_CASE("gradients vanish on a zero-residual batch") {
  Rng rng(3);
  const Model identity = TiedAutoencoder{Matrix::identity(5), Activation::identity()};
  for (const auto& g : backprop_gradients(identity, random_dataset(rng, 3, 5)))
    for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("deep gradients match central differences for every activation") {
  Rng rng(4);
  const Dataset batch = random_dataset(rng, 5, 8);
  for (const auto& act : {Activation::softplus(1.0), Activation::leaky_relu(0.1), Activation::prelu(0.25),
                          Activation::identity()}) {
    Rng mr(5);
    const Model model = make_fc_autoencoder(std::vector<std::size_t>{8, 6, 4, 8}, act, mr);
    CAPTURE(to_string(act.kind));
    CHECK(gradient_check(model, batch) <= 1e-4);
  }
}

TEST_CASE("prelu slopes are parameters") {
  Rng mr(6);
  Model model = make_fc_autoencoder(std::vector<std::size_t>{4, 3, 4}, Activation::prelu(0.25), mr);
  // 4x3 + 3 + slope, then 3x4 + 4.
  CHECK(parameter_count(model) == 12 + 3 + 1 + 12 + 4);
}

TEST_CASE("tied gradients match central differences") {
  Rng rng(7);
  const Dataset batch = random_dataset(rng, 4, 6);
  for (const auto& act : {Activation::softplus(2.0), Activation::leaky_relu(0.2), Activation::identity()}) {
    Rng mr(8);
    const Model model = make_tied_autoencoder(6, 9, act, mr);
    CHECK(gradient_check(model, batch) <= 1e-4);
  }
}

TEST_CASE("tied gradient equals the untied encoder plus decoder gradients") {
  Rng rng(9);
  const Dataset batch = random_dataset(rng, 3, 5);
  Rng mr(10);
  const TiedAutoencoder tied = make_tied_autoencoder(5, 7, Activation::softplus(1.0), mr);
  const AutoencoderModel untied({DenseLayer{tied.weight, {}, tied.activation},
                                 DenseLayer{tied.weight.transposed(), {}, std::nullopt}});
  const auto gt = backprop_gradients(Model(tied), batch);
  const auto gu = backprop_gradients(Model(untied), batch);
  REQUIRE(gt.size() == 1);
  REQUIRE(gu.size() == 2);
  const Matrix dec(5, 7, gu[1]);
  const Matrix dec_t = dec.transposed();
  for (std::size_t i = 0; i < gt[0].size(); ++i) {
    CHECK(std::abs(gt[0][i] - (gu[0][i] + dec_t.data()[i])) <= 1e-14);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.loss_checkpoints = {1e-4, 1e-4};
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.loss_checkpoints = {1e-4, 1e-3};
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.loss_checkpoints = {-1.0};
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("single image reaches the perfect-fit threshold") {
  const Dataset one = synthetic_images(0, 1, 4, 4, 1, 42);
  Rng mr(11);
  const Model model = make_tied_autoencoder(16, 2, Activation::leaky_relu(0.01), mr);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 20000;
  const auto res = train(model, one, cfg);
  CHECK(res.status == TrainStatus::ReachedTarget);
  CHECK(res.final_loss <= 1e-8);
  REQUIRE(res.checkpoints.size() == cfg.loss_checkpoints.size());
  for (std::size_t i = 0; i < res.checkpoints.size(); ++i) {
    const auto& ck = res.checkpoints[i];
    CHECK(ck.loss <= ck.threshold);
    CHECK(std::abs(mse_loss(ck.model, one) - ck.loss) <= 1e-12);
    if (i) CHECK(ck.loss < res.checkpoints[i - 1].loss);
    if (i) CHECK(ck.epoch >= res.checkpoints[i - 1].epoch);
  }
  CHECK(res.log.size() == res.epochs + 1);
}

TEST_CASE("training is deterministic and reports unreached targets") {
  const Dataset data = synthetic_images(0, 4, 4, 4, 1, 42);
  Rng m1(12), m2(12);
  const Model a = make_fc_autoencoder(std::vector<std::size_t>{16, 8, 16}, Activation::leaky_relu(0.01), m1);
  const Model b = make_fc_autoencoder(std::vector<std::size_t>{16, 8, 16}, Activation::leaky_relu(0.01), m2);
  TrainConfig cfg;
  cfg.loss_checkpoints = {1e-2, 1e-3};
  cfg.max_epochs = 3000;
  const auto ra = train(a, data, cfg);
  const auto rb = train(b, data, cfg);
  REQUIRE(ra.checkpoints.size() == rb.checkpoints.size());
  for (std::size_t i = 0; i < ra.checkpoints.size(); ++i) {
    CHECK(std::get<AutoencoderModel>(ra.checkpoints[i].model) == std::get<AutoencoderModel>(rb.checkpoints[i].model));
  }
  CHECK(ra.final_loss == rb.final_loss);

  cfg.loss_checkpoints = {1e-12};
  cfg.max_epochs = 5;
  const auto short_run = train(a, data, cfg);
  CHECK(short_run.status == TrainStatus::MaxEpochs);
  CHECK(short_run.checkpoints.empty());
  CHECK(short_run.epochs == 5);
}

TEST_CASE("minibatch training is deterministic") {
  const Dataset data = synthetic_images(0, 6, 4, 4, 1, 42);
  Rng m1(13);
  const Model a = make_fc_autoencoder(std::vector<std::size_t>{16, 12, 16}, Activation::softplus(), m1);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.loss_checkpoints = {1e-3};
  cfg.max_epochs = 200;
  const auto r1 = train(a, data, cfg);
  const auto r2 = train(a, data, cfg);
  CHECK(r1.final_loss == r2.final_loss);
  CHECK(r1.final_loss < mse_loss(a, data));
}

TEST_CASE("diverging training raises a numerical error") {
  const Dataset data = synthetic_images(0, 2, 4, 4, 1, 42);
  Rng mr(14);
  const Model model = make_tied_autoencoder(16, 4, Activation::identity(), mr);
  TrainConfig cfg;
  cfg.learning_rate = 1e200;
  cfg.max_epochs = 100;
  CHECK_THROWS_AS(train(model, data, cfg), NumericalError);
}

TEST_CASE("project_spectral_norm") {
  const TiedAutoencoder half{Matrix::diagonal(Vector{0.5, 0.3}), Activation::softplus()};
  CHECK(project_spectral_norm(half, 1.0) == half);

  Matrix two = Matrix::identity(3);
  for (auto& v : two.data()) v *= 2.0;
  const auto projected = project_spectral_norm(TiedAutoencoder{two, Activation::softplus()}, 1.0);
  CHECK(projected.weight == Matrix::identity(3));

  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const TiedAutoencoder ae{oracle::random_matrix(rng, 8, 5, -3, 3), Activation::softplus()};
    CHECK(power_iteration_sigma_max(project_spectral_norm(ae, 1.0).weight) <= 1.0 + 1e-6);
  }
  CHECK_THROWS_AS(project_spectral_norm(half, 0.0), InvalidArgument);
}
