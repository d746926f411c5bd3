#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "siml/error.hpp"
#include "siml/membank.hpp"
#include "siml/numkit.hpp"

using namespace siml;
using namespace siml::membank;

namespace {

numkit::Vec random_unit(numkit::Rng& rng, std::size_t dim) {
  numkit::Vec v(dim);
  for (double& x : v) x = rng.normal();
  return numkit::l2_normalize(v);
}

}  // namespace

TEST_CASE("first write stores the feature verbatim") {
  MemoryBank bank(2, 2, 0.8);
  CHECK_FALSE(bank.initialized(0));
  CHECK_FALSE(bank.fully_initialized());

  // deliberately not unit length: the first write must not touch it
  numkit::Vec raw = {3.0, 4.0};
  bank.update(0, raw);
  CHECK(bank.initialized(0));
  CHECK(bank.row(0) == raw);
  CHECK(bank.initialized_count() == 1);
  CHECK_FALSE(bank.fully_initialized());

  bank.update(1, {0.0, 1.0});
  CHECK(bank.fully_initialized());
}

TEST_CASE("later writes blend and renormalize") {
  MemoryBank bank(1, 2, 0.8);
  bank.update(0, {0.6, 0.8});
  bank.update(0, {1.0, 0.0});
  // 0.8*(1,0) + 0.2*(0.6,0.8) = (0.92, 0.16), then normalized
  const double n = std::hypot(0.92, 0.16);
  CHECK(bank.row(0)[0] == doctest::Approx(0.92 / n).epsilon(1e-12));
  CHECK(bank.row(0)[1] == doctest::Approx(0.16 / n).epsilon(1e-12));
  CHECK(std::abs(numkit::norm(bank.row(0)) - 1.0) <= 1e-12);
}

TEST_CASE("momentum one overwrites the row") {
  MemoryBank bank(1, 2, 1.0);
  bank.update(0, {1.0, 0.0});
  bank.update(0, {0.0, 1.0});
  CHECK(bank.row(0)[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(bank.row(0)[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("renormalize can be disabled for comparison runs") {
  MemoryBank bank(1, 2, 0.5, false);
  CHECK_FALSE(bank.renormalize());
  bank.update(0, {1.0, 0.0});
  bank.update(0, {0.0, 1.0});
  // raw blend, no renormalization
  CHECK(bank.row(0)[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(bank.row(0)[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("reading an unwritten slot fails loudly") {
  MemoryBank bank(2, 2, 0.8);
  bank.update(0, {1.0, 0.0});
  CHECK_THROWS_WITH_AS(bank.row(1), doctest::Contains("UninitializedSlot"), Error);
  CHECK_THROWS_AS(bank.snapshot(), Error);
  CHECK_THROWS_AS(bank.update(2, {1.0, 0.0}), Error);  // out of range
  CHECK_THROWS_AS(bank.update(0, {1.0, 0.0, 0.0}), Error);  // wrong dim
}

TEST_CASE("constructor validation") {
  CHECK_THROWS_AS(MemoryBank(0, 2, 0.8), Error);
  CHECK_THROWS_AS(MemoryBank(2, 0, 0.8), Error);
  CHECK_THROWS_AS(MemoryBank(2, 2, 0.0), Error);
  CHECK_THROWS_AS(MemoryBank(2, 2, 1.5), Error);
  CHECK_NOTHROW(MemoryBank(2, 2, 1.0));
}

TEST_CASE("rows stay unit over many randomized updates") {
  numkit::Rng rng(31337);
  MemoryBank bank(8, 6, 0.8);
  for (std::size_t i = 0; i < 8; ++i) bank.update(i, random_unit(rng, 6));
  for (int step = 0; step < 10000; ++step) {
    bank.update(rng.below(8), random_unit(rng, 6));
  }
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(std::abs(numkit::norm(bank.row(i)) - 1.0) <= 1e-6);
  }
}

TEST_CASE("holistic feature averages and renormalizes") {
  HolisticTrace t = holistic_feature({1.0, 0.0}, {{0.0, 1.0}});
  CHECK(t.count == 2);
  CHECK(t.mean[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(t.feature[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(t.feature[1] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));

  // antipodal inputs average to zero: no direction to keep
  CHECK_THROWS_WITH_AS(holistic_feature({1.0, 0.0}, {{-1.0, 0.0}}),
                       doctest::Contains("ZeroVector"), Error);
}

TEST_CASE("holistic input gradient matches finite differences") {
  numkit::Rng rng(99);
  const std::size_t dim = 5;
  numkit::Vec original = random_unit(rng, dim);
  std::vector<numkit::Vec> scaled = {random_unit(rng, dim), random_unit(rng, dim)};
  numkit::Vec coeff(dim);
  for (double& c : coeff) c = rng.uniform(-1.0, 1.0);

  HolisticTrace trace = holistic_feature(original, scaled);
  numkit::Vec grad = holistic_input_grad(trace, coeff);

  auto value = [&] {
    HolisticTrace t = holistic_feature(original, scaled);
    double v = 0.0;
    for (std::size_t k = 0; k < dim; ++k) v += coeff[k] * t.feature[k];
    return v;
  };
  const double eps = 1e-6;
  // every averaged input receives the same gradient vector; check it against
  // finite differences through each input slot
  for (numkit::Vec* slot : {&original, &scaled[0], &scaled[1]}) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double keep = (*slot)[k];
      (*slot)[k] = keep + eps;
      const double lp = value();
      (*slot)[k] = keep - eps;
      const double lm = value();
      (*slot)[k] = keep;
      const double fd = (lp - lm) / (2 * eps);
      const double denom = std::max({std::abs(fd), std::abs(grad[k]), 1e-8});
      CHECK(std::abs(fd - grad[k]) / denom < 1e-4);
    }
  }
}

TEST_CASE("fuse averages bank rows and renormalizes") {
  MemoryBank a(2, 2, 0.8), b(2, 2, 0.8);
  a.update(0, {1.0, 0.0});
  a.update(1, {0.0, 1.0});
  b.update(0, {0.0, 1.0});
  b.update(1, {0.0, 1.0});
  numkit::Mat fused = fuse(a, b);
  CHECK(fused.rows == 2);
  CHECK(fused.cols == 2);
  CHECK(fused.data[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(fused.data[1] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(fused.data[2] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(fused.data[3] == doctest::Approx(1.0).epsilon(1e-12));

  MemoryBank partial(2, 2, 0.8);
  partial.update(0, {1.0, 0.0});
  CHECK_THROWS_AS(fuse(a, partial), Error);

  MemoryBank wrong(3, 2, 0.8);
  for (std::size_t i = 0; i < 3; ++i) wrong.update(i, {1.0, 0.0});
  CHECK_THROWS_WITH_AS(fuse(a, wrong), doctest::Contains("DimMismatch"), Error);
}

TEST_CASE("similarity is the gram matrix of fused rows") {
  numkit::Mat rows(3, 4);
  numkit::Rng rng(17);
  for (std::size_t r = 0; r < 3; ++r) {
    numkit::Vec v = random_unit(rng, 4);
    for (std::size_t c = 0; c < 4; ++c) rows.data[r * 4 + c] = v[c];
  }
  numkit::Mat sim = similarity(rows);
  REQUIRE(sim.rows == 3);
  REQUIRE(sim.cols == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(sim.data[i * 3 + i] == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(sim.data[i * 3 + j] == doctest::Approx(numkit::dot(rows.row_span(i), rows.row_span(j)))
                                       .epsilon(1e-12));
      CHECK(sim.data[i * 3 + j] == sim.data[j * 3 + i]);
    }
  }
}

TEST_CASE("save and load round-trip bit-for-bit") {
  numkit::Rng rng(555);
  MemoryBank bank(5, 3, 0.8);
  for (std::size_t i = 0; i < 5; ++i) bank.update(i, random_unit(rng, 3));
  for (int k = 0; k < 20; ++k) bank.update(rng.below(5), random_unit(rng, 3));

  std::stringstream buf;
  bank.save(buf);
  MemoryBank loaded = MemoryBank::load(buf);
  CHECK(loaded == bank);
  for (std::size_t i = 0; i < 5; ++i) CHECK(loaded.row(i) == bank.row(i));
}

TEST_CASE("partial banks round-trip too") {
  MemoryBank bank(3, 2, 0.8);
  bank.update(1, {0.0, 1.0});
  std::stringstream buf;
  bank.save(buf);
  MemoryBank loaded = MemoryBank::load(buf);
  CHECK(loaded == bank);
  CHECK(loaded.initialized(1));
  CHECK_FALSE(loaded.initialized(0));
}

TEST_CASE("the renormalize flag survives serialization") {
  MemoryBank bank(1, 2, 0.5, false);
  bank.update(0, {1.0, 0.0});
  std::stringstream buf;
  bank.save(buf);
  MemoryBank loaded = MemoryBank::load(buf);
  CHECK_FALSE(loaded.renormalize());
  loaded.update(0, {0.0, 1.0});
  CHECK(loaded.row(0)[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("corrupt bank streams are rejected") {
  MemoryBank bank(2, 2, 0.8);
  bank.update(0, {1.0, 0.0});
  bank.update(1, {0.0, 1.0});
  std::stringstream buf;
  bank.save(buf);
  const std::string full = buf.str();

  SUBCASE("truncated") {
    std::stringstream cut(full.substr(0, full.size() - 5));
    CHECK_THROWS_WITH_AS(MemoryBank::load(cut), doctest::Contains("CheckpointMismatch"), Error);
  }
  SUBCASE("garbage header") {
    std::string mangled = full;
    mangled[6] = '!';
    std::stringstream in(mangled);
    CHECK_THROWS_AS(MemoryBank::load(in), Error);
  }
}

TEST_CASE("bank pairs serialize together") {
  numkit::Rng rng(777);
  MemoryBank inst(4, 3, 0.8), hol(4, 3, 0.8);
  for (std::size_t i = 0; i < 4; ++i) {
    inst.update(i, random_unit(rng, 3));
    hol.update(i, random_unit(rng, 3));
  }
  std::stringstream buf;
  save_banks(buf, inst, hol);
  BankPair pair = load_banks(buf);
  CHECK(pair.instance_bank == inst);
  CHECK(pair.holistic_bank == hol);

  std::stringstream cut(buf.str().substr(0, 10));
  CHECK_THROWS_AS(load_banks(cut), Error);
}
