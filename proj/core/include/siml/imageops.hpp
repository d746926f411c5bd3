#pragma once

#include <string>
#include <vector>

#include "siml/image.hpp"
#include "siml/synthdata.hpp"

namespace siml::imageops {

struct ScalePreset {
  std::string name;
  int height = 0;
  int width = 0;
};

/// Desk-scale defaults (quarter resolution of the full presets).
std::vector<ScalePreset> default_presets();
/// Full-resolution presets: 112x48, 224x96, 448x192.
std::vector<ScalePreset> full_presets();
/// Presets must be at least 2x2 and strictly increasing in area.
void validate_presets(const std::vector<ScalePreset>& presets);

/// Per person: the original-size crop plus one resized crop per preset.
/// Crops are background-filtered by the mask iff the set was built with
/// use_mask = true.
struct ScaleExemplarSet {
  int instance_index = -1;
  Image original_crop;
  std::vector<Image> scaled_crops;
};

Image crop(const Image& scene, int x, int y, int w, int h);
Image crop(const synthdata::SceneRecord& scene, const synthdata::PersonGT& person);

/// Pixel-wise multiplication; background goes to exactly 0.
Image mask_multiply(const Image& patch, const Mask& mask);

/// Align-corners bilinear resize: source corners map exactly onto target
/// corners, so resizing to the source size is the identity. A target dimension
/// of 1 samples the leading corner along that axis.
Image bilinear_resize(const Image& patch, int target_height, int target_width);
Image bilinear_resize(const Image& patch, const ScalePreset& preset);

ScaleExemplarSet build_exemplar_set(const synthdata::SceneRecord& scene,
                                    const synthdata::PersonGT& person,
                                    const std::vector<ScalePreset>& presets, bool use_mask);

}  // namespace siml::imageops
