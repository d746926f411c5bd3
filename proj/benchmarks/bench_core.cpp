#include <benchmark/benchmark.h>

#include "siml/dmlloss.hpp"
#include "siml/encoder.hpp"
#include "siml/labeler.hpp"
#include "siml/membank.hpp"
#include "siml/synthdata.hpp"
#include "siml/trainer.hpp"

using namespace siml;

namespace {

synthdata::Dataset small_dataset() {
  synthdata::DatasetConfig cfg;
  cfg.num_identities = 40;
  cfg.num_scenes = 80;
  cfg.seed = 11;
  return synthdata::generate_dataset(cfg);
}

Image random_crop(int h, int w, numkit::Rng& rng) {
  Image img(h, w);
  for (double& v : img.pix) v = rng.uniform();
  return img;
}

}  // namespace

static void encoder_forward(benchmark::State& state) {
  encoder::EncoderConfig cfg;
  numkit::Rng rng(3);
  const encoder::EncoderParams params = encoder::init_params(cfg, rng);
  const Image img = random_crop(48, 20, rng);
  for (auto _ : state) {
    auto trace = encoder::forward(params, img);
    benchmark::DoNotOptimize(trace.feature.data());
  }
}
BENCHMARK(encoder_forward);

static void encoder_backward(benchmark::State& state) {
  encoder::EncoderConfig cfg;
  numkit::Rng rng(3);
  const encoder::EncoderParams params = encoder::init_params(cfg, rng);
  const Image img = random_crop(48, 20, rng);
  const auto trace = encoder::forward(params, img);
  numkit::Vec d(cfg.dim);
  for (double& v : d) v = rng.normal();
  numkit::Mat acc(params.weights.rows, params.weights.cols, 0.0);
  for (auto _ : state) {
    encoder::accumulate_backward(params, trace, d, 1.0, acc);
    benchmark::DoNotOptimize(acc.data.data());
  }
}
BENCHMARK(encoder_backward);

static void bank_similarity(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  numkit::Rng rng(5);
  numkit::Mat rows(n, 32);
  for (std::size_t i = 0; i < n; ++i) {
    numkit::Vec v(32);
    for (double& x : v) x = rng.normal();
    numkit::l2_normalize_inplace(v);
    std::copy(v.begin(), v.end(), rows.row(i));
  }
  for (auto _ : state) {
    auto sim = membank::similarity(rows);
    benchmark::DoNotOptimize(sim.data.data());
  }
}
BENCHMARK(bank_similarity)->Arg(200)->Arg(600);

static void dbscan_epoch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  numkit::Rng rng(7);
  numkit::Mat rows(n, 32);
  for (std::size_t i = 0; i < n; ++i) {
    numkit::Vec v(32);
    for (double& x : v) x = rng.normal();
    numkit::l2_normalize_inplace(v);
    std::copy(v.begin(), v.end(), rows.row(i));
  }
  numkit::Mat dist = membank::similarity(rows);
  for (double& v : dist.data) v = 1.0 - v;
  labeler::DbscanConfig cfg;
  for (auto _ : state) {
    auto clusters = labeler::dbscan_from_distances(dist, cfg);
    benchmark::DoNotOptimize(clusters.cluster_of.data());
  }
}
BENCHMARK(dbscan_epoch)->Arg(200)->Arg(600);

static void train_one_step(benchmark::State& state) {
  const synthdata::Dataset dataset = small_dataset();
  trainer::TrainConfig cfg;
  cfg.epochs = 1;
  const auto inputs = trainer::build_inputs(dataset, cfg);
  auto train_state = trainer::init_state(cfg, dataset.manifest.instance_count);
  std::vector<const trainer::SceneInputs*> batch{&inputs[0], &inputs[1]};
  for (auto _ : state) {
    auto breakdown = trainer::train_step(train_state, cfg, batch);
    benchmark::DoNotOptimize(breakdown.total);
  }
}
BENCHMARK(train_one_step);

BENCHMARK_MAIN();
