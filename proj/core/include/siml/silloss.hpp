#pragma once

#include <vector>

#include "siml/numkit.hpp"

namespace siml::silloss {

/// Features of one person in a scene: the main-branch instance feature plus
/// the exemplar-branch features at each augmented scale and at the original
/// scale. All unit norm.
struct PersonFeatures {
  numkit::Vec instance;
  std::vector<numkit::Vec> scaled;
  numkit::Vec original;
};

struct SceneFeatures {
  std::vector<PersonFeatures> persons;
};

struct SilConfig {
  double margin = 0.3;
  double gamma = 0.05;  // weight of the original-scale anchor term
};

/// Selected hard exemplars for one person. neg_scale indexes the negative
/// person's feature list: 0..K-1 are augmented scales, K is the original
/// scale. Ties keep the earliest candidate in traversal order (positives by
/// ascending scale; negatives by ascending person, then scale, then original).
struct HardSelection {
  int pos_scale = -1;
  int neg_person = -1;
  int neg_scale = -1;
  double pos_dist = 0.0;
  double neg_dist = 0.0;
  bool hinge_active = false;
};

struct SceneLossResult {
  double value = 0.0;
  std::vector<HardSelection> selections;
};

/// Per-person hinge on (margin + hardest positive - hardest negative) plus the
/// gamma-weighted original-scale anchor, averaged over persons. A singleton
/// scene has no within-scene negatives: the hinge is skipped and only the
/// anchor contributes.
SceneLossResult scene_loss(const SceneFeatures& scene, const SilConfig& config);

struct SceneGradients {
  std::vector<numkit::Vec> d_instance;
  std::vector<std::vector<numkit::Vec>> d_scaled;
  std::vector<numkit::Vec> d_original;
};

/// Subgradient: flows only through the selected hard positive/negative and the
/// anchor; an inactive hinge contributes nothing (the kink counts as inactive).
SceneGradients scene_loss_grad(const SceneFeatures& scene, const SilConfig& config);

/// Arithmetic mean of scene losses over the batch.
double batch_loss(const std::vector<SceneFeatures>& scenes, const SilConfig& config);

}  // namespace siml::silloss
