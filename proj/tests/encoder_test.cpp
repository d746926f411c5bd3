#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "siml/encoder.hpp"
#include "siml/error.hpp"
#include "siml/numkit.hpp"

using namespace siml;
using namespace siml::encoder;

namespace {

Image gradient_image(int h, int w) {
  Image img;
  img.height = h;
  img.width = w;
  img.pix.resize(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.pix[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            (y * 31 + x * 7 + c * 13) % 97 / 96.0;
      }
    }
  }
  return img;
}

EncoderParams tiny_params(unsigned long long seed = 11) {
  EncoderConfig cfg;
  cfg.dim = 6;
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  numkit::Rng rng(seed);
  return init_params(cfg, rng);
}

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("grid_pool averages each cell, remainder going to the last") {
  // 3x3 image, 2x2 grid: cells are 1x1, 1x2, 2x1, 2x2 (remainder rows and
  // columns belong to the last cell per axis)
  Image img;
  img.height = 3;
  img.width = 3;
  img.pix.assign(27, 0.0);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) img.pix[(static_cast<std::size_t>(y) * 3 + x) * 3 + c] = y * 3 + x;

  numkit::Vec pooled = grid_pool(img, 2, 2);
  REQUIRE(pooled.size() == 12);
  // cell (0,0) = pixel 0; cell (0,1) = mean(1,2); cell (1,0) = mean(3,6);
  // cell (1,1) = mean(4,5,7,8)
  const double want[4] = {0.0, 1.5, 4.5, 6.0};
  for (int cell = 0; cell < 4; ++cell) {
    for (int c = 0; c < 3; ++c) {
      CHECK(pooled[static_cast<std::size_t>(cell) * 3 + c] == doctest::Approx(want[cell]).epsilon(1e-12));
    }
  }
}

TEST_CASE("grid_pool rejects images smaller than the grid") {
  Image img = gradient_image(2, 2);
  CHECK_THROWS_WITH_AS(grid_pool(img, 4, 2), doctest::Contains("ImageTooSmall"), Error);
}

TEST_CASE("forward output is unit length and matches forward_pooled") {
  EncoderParams params = tiny_params();
  Image img = gradient_image(5, 7);
  ForwardTrace t = forward(params, img);
  CHECK(std::abs(numkit::norm(t.feature) - 1.0) <= 1e-12);
  CHECK(std::abs(t.norm - numkit::norm(t.pre_norm)) <= 1e-12);

  ForwardTrace t2 = forward_pooled(params, grid_pool(img, params.grid_h, params.grid_w));
  CHECK(t.feature == t2.feature);
  CHECK(t.pre_norm == t2.pre_norm);
}

TEST_CASE("backward matches central finite differences") {
  EncoderParams params = tiny_params(5);
  Image img = gradient_image(6, 6);

  // loss = sum(coeff * f) for a fixed random coefficient vector
  numkit::Rng rng(77);
  numkit::Vec coeff(static_cast<std::size_t>(params.dim));
  for (double& c : coeff) c = rng.uniform(-1.0, 1.0);

  ForwardTrace trace = forward(params, img);
  numkit::Mat grad = backward(params, trace, coeff);
  REQUIRE(grad.rows == params.weights.rows);
  REQUIRE(grad.cols == params.weights.cols);

  const double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.weights.data.size(); ++i) {
    EncoderParams p = params;
    p.weights.data[i] += eps;
    ForwardTrace tp = forward(p, img);
    p.weights.data[i] -= 2 * eps;
    ForwardTrace tm = forward(p, img);
    double lp = 0.0, lm = 0.0;
    for (std::size_t k = 0; k < coeff.size(); ++k) {
      lp += coeff[k] * tp.feature[k];
      lm += coeff[k] * tm.feature[k];
    }
    const double fd = (lp - lm) / (2 * eps);
    const double an = grad.data[i];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("accumulate_backward sums weighted gradients") {
  EncoderParams params = tiny_params(9);
  Image img = gradient_image(4, 5);
  ForwardTrace trace = forward(params, img);
  numkit::Vec d(static_cast<std::size_t>(params.dim), 0.25);

  numkit::Mat single = backward(params, trace, d);
  numkit::Mat acc(params.weights.rows, params.weights.cols);
  accumulate_backward(params, trace, d, 0.5, acc);
  accumulate_backward(params, trace, d, 1.5, acc);
  for (std::size_t i = 0; i < acc.data.size(); ++i) {
    CHECK(acc.data[i] == doctest::Approx(2.0 * single.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("sgd update follows the momentum recurrence") {
  EncoderParams params;
  params.dim = 1;
  params.grid_h = 1;
  params.grid_w = 1;
  params.weights = numkit::Mat(1, 3);
  params.weights.data = {1.0, 2.0, 3.0};

  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.5;
  cfg.weight_decay = 0.01;
  SgdState state = init_sgd(cfg, params);

  numkit::Mat grad(1, 3);
  grad.data = {1.0, 0.0, -1.0};

  // v = 0.5*0 + g + 0.01*W, W -= 0.1*v
  sgd_step(params, state, grad, 0);
  CHECK(state.velocity.data[0] == doctest::Approx(1.01).epsilon(1e-12));
  CHECK(state.velocity.data[1] == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(state.velocity.data[2] == doctest::Approx(-0.97).epsilon(1e-12));
  CHECK(params.weights.data[0] == doctest::Approx(1.0 - 0.1 * 1.01).epsilon(1e-12));
  CHECK(params.weights.data[2] == doctest::Approx(3.0 + 0.1 * 0.97).epsilon(1e-12));

  // second step folds the previous velocity back in
  const double w0 = params.weights.data[0];
  const double v0 = state.velocity.data[0];
  sgd_step(params, state, grad, 0);
  const double v1 = 0.5 * v0 + 1.0 + 0.01 * w0;
  CHECK(state.velocity.data[0] == doctest::Approx(v1).epsilon(1e-12));
  CHECK(params.weights.data[0] == doctest::Approx(w0 - 0.1 * v1).epsilon(1e-12));
}

TEST_CASE("learning rate decays at the scheduled epochs") {
  SgdConfig cfg;  // defaults: 1e-3, decays at 16 and 22 by 0.1
  CHECK(learning_rate_at(cfg, 0) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(learning_rate_at(cfg, 15) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(learning_rate_at(cfg, 16) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(learning_rate_at(cfg, 21) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(learning_rate_at(cfg, 22) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(learning_rate_at(cfg, 100) == doctest::Approx(1e-5).epsilon(1e-12));
}

TEST_CASE("zero learning rate freezes the weights but not the velocity") {
  EncoderParams params = tiny_params(21);
  const numkit::Mat before = params.weights;
  SgdConfig cfg;
  cfg.learning_rate = 0.0;
  SgdState state = init_sgd(cfg, params);
  numkit::Mat grad(params.weights.rows, params.weights.cols);
  for (double& g : grad.data) g = 0.5;
  sgd_step(params, state, grad, 0);
  CHECK(params.weights.data == before.data);
  CHECK(state.velocity.data[0] != 0.0);
}

TEST_CASE("sgd config validation") {
  EncoderParams params = tiny_params();
  SgdConfig cfg;
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(init_sgd(cfg, params), Error);
  cfg.learning_rate = 1e-3;
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(init_sgd(cfg, params), Error);
  cfg.momentum = 0.9;
  // zero decay factor is fine: the rate just hits zero after the first decay
  cfg.decay_factor = 0.0;
  CHECK_NOTHROW(init_sgd(cfg, params));
}

TEST_CASE("init_params is seed deterministic") {
  EncoderConfig cfg;
  cfg.dim = 4;
  cfg.grid_h = 2;
  cfg.grid_w = 3;
  numkit::Rng a(123), b(123), c(124);
  EncoderParams pa = init_params(cfg, a);
  EncoderParams pb = init_params(cfg, b);
  EncoderParams pc = init_params(cfg, c);
  CHECK(pa.weights.data == pb.weights.data);
  CHECK(pa.weights.data != pc.weights.data);
  CHECK(pa.weights.rows == 4);
  CHECK(pa.weights.cols == 3 * 2 * 3);
}

TEST_CASE("checkpoint round-trips exactly") {
  EncoderParams params = tiny_params(31);
  SgdConfig sgd_cfg;
  SgdState sgd = init_sgd(sgd_cfg, params);
  numkit::Mat grad(params.weights.rows, params.weights.cols);
  for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] = 0.001 * double(i % 17) - 0.008;
  sgd_step(params, sgd, grad, 3);

  const auto path = temp_path("siml_encoder_ckpt_test.bin");
  save_checkpoint(path.string(), params, sgd, 3);
  Checkpoint loaded = load_checkpoint(path.string());
  CHECK(loaded.epoch == 3);
  CHECK(loaded.params.dim == params.dim);
  CHECK(loaded.params.weights.data == params.weights.data);
  CHECK(loaded.sgd.velocity.data == sgd.velocity.data);
  CHECK(loaded.sgd.config.decay_epochs == sgd.config.decay_epochs);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
  EncoderParams params = tiny_params(41);
  SgdState sgd = init_sgd(SgdConfig{}, params);
  const auto path = temp_path("siml_encoder_ckpt_corrupt.bin");
  save_checkpoint(path.string(), params, sgd, 0);

  SUBCASE("truncated payload") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 9);
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("CheckpointMismatch"),
                         Error);
  }
  SUBCASE("trailing garbage") {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "extra";
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path.string()), Error);
  }
  SUBCASE("missing file") {
    std::filesystem::remove(path);
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("IoFailure"), Error);
  }
  std::filesystem::remove(path);
}
