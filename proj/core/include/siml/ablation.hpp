#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "siml/synthdata.hpp"
#include "siml/trainer.hpp"

namespace siml::ablation {

/// One training variant.  Fields override the base config; delta < 0 keeps
/// the base value.
struct ArmSpec {
  std::string name;
  trainer::LossToggles toggles;
  trainer::ScaleMode scale_mode = trainer::ScaleMode::multi;
  bool use_mask = true;
  double delta = -1.0;
};

/// Which loss terms matter: cluster-only baseline, each addition alone, both.
std::vector<ArmSpec> loss_toggle_arms();

/// Which scale setting matters: no resizing, one preset, the full pyramid,
/// and the pyramid with background masking.  All loss terms stay on.
std::vector<ArmSpec> scale_arms();

/// Sensitivity of the positive-pull weight: delta in {0.5, 1, 2, 5}.
std::vector<ArmSpec> delta_arms();

struct ArmResult {
  std::string arm;
  std::uint64_t seed = 0;
  double map = 0.0;
  double top1 = 0.0;
  double label_precision = 0.0;
  double label_recall = 0.0;
};

struct ArmSummary {
  std::string arm;
  std::size_t runs = 0;
  double mean_map = 0.0;
  double stddev_map = 0.0;
  double mean_top1 = 0.0;
  double stddev_top1 = 0.0;
};

/// Trains every (arm, seed) cell and records the final-epoch numbers.  The
/// dataset for a seed is generated once (data seed = trainer seed) and shared
/// by all arms, so arm comparisons are paired.  Needs at least two arms and
/// three seeds.  Writes one progress line per cell to `progress` if given.
std::vector<ArmResult> run_ablation(const synthdata::DatasetConfig& data_config,
                                    const trainer::TrainConfig& base,
                                    const std::vector<ArmSpec>& arms,
                                    const std::vector<std::uint64_t>& seeds,
                                    std::ostream* progress = nullptr);

/// CSV with header `arm,seed,map,top1,label_precision,label_recall`.
void write_ablation_csv(std::ostream& out, const std::vector<ArmResult>& rows);
std::vector<ArmResult> read_ablation_csv(std::istream& in);

/// Mean and sample stddev per arm, in first-appearance order.
std::vector<ArmSummary> summarize(const std::vector<ArmResult>& rows);

}  // namespace siml::ablation
