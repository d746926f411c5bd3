#include "siml/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "siml/error.hpp"

namespace siml::numkit {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::dim_mismatch, "dot: " + std::to_string(a.size()) + " vs " +
                                        std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double sqdist(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::dim_mismatch, "sqdist: " + std::to_string(a.size()) + " vs " +
                                        std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

Vec l2_normalize(std::span<const double> v, double eps) {
  Vec out(v.begin(), v.end());
  l2_normalize_inplace(out, eps);
  return out;
}

void l2_normalize_inplace(std::span<double> v, double eps) {
  const double n = norm(v);
  if (n <= eps) {
    throw Error(Errc::zero_vector, "norm " + std::to_string(n) + " below guard");
  }
  for (double& x : v) {
    x /= n;
  }
}

Mat gram(const Mat& rows) {
  Mat out(rows.rows, rows.rows);
  for (std::size_t i = 0; i < rows.rows; ++i) {
    for (std::size_t j = i; j < rows.rows; ++j) {
      // Mirroring is bit-exact: the per-entry dot product is commutative in
      // its arguments and the accumulation order is the same.
      const double s = dot(rows.row_span(i), rows.row_span(j));
      out.at(i, j) = s;
      out.at(j, i) = s;
    }
  }
  return out;
}

std::vector<std::size_t> argsort_desc(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return values[a] > values[b];
  });
  return idx;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream_id) {
  return Rng(splitmix64(splitmix64(seed) ^ stream_id));
}

std::uint64_t Rng::next_u64() { return engine_(); }

std::uint64_t Rng::below(std::uint64_t n) {
  return next_u64() % n;
}

double Rng::uniform() {
  // 53 high bits -> [0, 1) on the dyadic grid.
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

}  // namespace siml::numkit

namespace siml {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::zero_vector: return "ZeroVector";
    case Errc::dim_mismatch: return "DimMismatch";
    case Errc::out_of_bounds: return "OutOfBounds";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::source_too_small: return "SourceTooSmall";
    case Errc::image_too_small: return "ImageTooSmall";
    case Errc::degenerate_norm: return "DegenerateNorm";
    case Errc::empty_batch: return "EmptyBatch";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::uninitialized_slot: return "UninitializedSlot";
    case Errc::query_without_match: return "QueryWithoutMatch";
    case Errc::malformed_csv: return "MalformedCsv";
    case Errc::io_failure: return "IoFailure";
    case Errc::checkpoint_mismatch: return "CheckpointMismatch";
  }
  return "UnknownError";
}

}  // namespace siml
