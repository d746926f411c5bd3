#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "siml/numkit.hpp"

namespace siml::membank {

/// One momentum-updated feature store with a unit-norm row per instance.
///
/// Rows start out empty.  The first write to a slot stores the feature
/// verbatim; later writes blend the incoming feature with the stored row and
/// renormalize, so with unit inputs every readable row stays on the unit
/// sphere.  Pass renormalize = false to keep the raw blend instead (the
/// similarity matrix then stops being a true cosine matrix; mostly useful for
/// comparison runs).
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(std::size_t size, std::size_t dim, double momentum, bool renormalize = true);

  std::size_t size() const { return size_; }
  std::size_t dim() const { return dim_; }
  double momentum() const { return momentum_; }
  bool renormalize() const { return renormalize_; }

  bool initialized(std::size_t index) const;
  std::size_t initialized_count() const { return initialized_count_; }
  bool fully_initialized() const { return initialized_count_ == size_ && size_ > 0; }

  /// Blend `feature` into slot `index`: row = momentum * feature +
  /// (1 - momentum) * row, then renormalize (unless disabled).  The first
  /// write stores `feature` unchanged.
  void update(std::size_t index, const numkit::Vec& feature);

  /// Stored row; throws if the slot was never written.
  const numkit::Vec& row(std::size_t index) const;

  /// Copy of the whole bank; throws if any slot was never written.
  numkit::Mat snapshot() const;

  void save(std::ostream& out) const;
  static MemoryBank load(std::istream& in);

  friend bool operator==(const MemoryBank& a, const MemoryBank& b);

 private:
  std::size_t size_ = 0;
  std::size_t dim_ = 0;
  double momentum_ = 0.8;
  bool renormalize_ = true;
  std::size_t initialized_count_ = 0;
  std::vector<numkit::Vec> rows_;
  std::vector<unsigned char> have_;
};

/// Save/load the instance bank and the holistic bank together, as produced by
/// a training run.
void save_banks(std::ostream& out, const MemoryBank& instance_bank,
                const MemoryBank& holistic_bank);
struct BankPair {
  MemoryBank instance_bank;
  MemoryBank holistic_bank;
};
BankPair load_banks(std::istream& in);

/// Average of the original-crop feature and every scaled-crop feature,
/// renormalized to unit length.
struct HolisticTrace {
  std::size_t count = 0;    // inputs averaged
  numkit::Vec mean;         // pre-normalization average
  double norm = 0.0;
  numkit::Vec feature;      // unit-length result
};

HolisticTrace holistic_feature(const numkit::Vec& original,
                               const std::vector<numkit::Vec>& scaled);

/// Gradient of a loss on the holistic feature with respect to any single one
/// of the averaged inputs (they all receive the same vector).
numkit::Vec holistic_input_grad(const HolisticTrace& trace, const numkit::Vec& d_feature);

/// Row-wise mean of the two banks, renormalized per row.  Both banks must be
/// fully written and agree on shape.
numkit::Mat fuse(const MemoryBank& instance_bank, const MemoryBank& holistic_bank);

/// Pairwise dot products of the fused rows (symmetric, unit diagonal up to
/// rounding).
numkit::Mat similarity(const numkit::Mat& fused);

}  // namespace siml::membank
