#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace siml::numkit {

using Vec = std::vector<double>;

/// Dense row-major matrix. All storage is double; accumulations elsewhere in
/// the library stay in double as well.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::span<const double> row_span(std::size_t r) const { return {row(r), cols}; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Guard against normalizing vectors that are numerically zero.
inline constexpr double kNormEps = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
double sqdist(std::span<const double> a, std::span<const double> b);

Vec l2_normalize(std::span<const double> v, double eps = kNormEps);
void l2_normalize_inplace(std::span<double> v, double eps = kNormEps);

/// rows * rows^T, accumulated left to right per entry.
Mat gram(const Mat& rows);

/// Indices of `values` sorted by descending value; ties keep ascending index.
std::vector<std::size_t> argsort_desc(std::span<const double> values);

/// Seedable deterministic generator with value semantics. The raw stream comes
/// from std::mt19937_64; uniform/normal transforms are fixed here so that the
/// derived streams are reproducible bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream derived from (seed, stream_id); used so scenes can be
  /// generated in any order or in parallel.
  static Rng substream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  /// Uniform integer in [0, n), n >= 1.
  std::uint64_t below(std::uint64_t n);
  /// Uniform double in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; the pair partner is cached in the value.
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Fisher-Yates with draws from `rng`; deterministic given the stream state.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace siml::numkit
