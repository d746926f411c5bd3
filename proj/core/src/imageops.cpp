#include "siml/imageops.hpp"

#include <cmath>
#include <string>

#include "siml/error.hpp"

namespace siml::imageops {

std::vector<ScalePreset> default_presets() {
  return {{"scale-1", 28, 12}, {"scale-2", 56, 24}, {"scale-3", 112, 48}};
}

std::vector<ScalePreset> full_presets() {
  return {{"scale-1", 112, 48}, {"scale-2", 224, 96}, {"scale-3", 448, 192}};
}

void validate_presets(const std::vector<ScalePreset>& presets) {
  long prev_area = 0;
  for (const ScalePreset& p : presets) {
    if (p.height < 2 || p.width < 2) {
      throw Error(Errc::invalid_config, "preset " + p.name + " smaller than 2x2");
    }
    const long area = static_cast<long>(p.height) * p.width;
    if (area <= prev_area) {
      throw Error(Errc::invalid_config, "presets must strictly increase in area");
    }
    prev_area = area;
  }
}

Image crop(const Image& scene, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > scene.width || y + h > scene.height) {
    throw Error(Errc::out_of_bounds, "crop box (" + std::to_string(x) + "," + std::to_string(y) +
                                         "," + std::to_string(w) + "," + std::to_string(h) +
                                         ") outside " + std::to_string(scene.width) + "x" +
                                         std::to_string(scene.height));
  }
  Image out(h, w);
  for (int yy = 0; yy < h; ++yy) {
    for (int xx = 0; xx < w; ++xx) {
      for (int c = 0; c < 3; ++c) {
        out.at(yy, xx, c) = scene.at(y + yy, x + xx, c);
      }
    }
  }
  return out;
}

Image crop(const synthdata::SceneRecord& scene, const synthdata::PersonGT& person) {
  return crop(scene.raster, person.x, person.y, person.w, person.h);
}

Image mask_multiply(const Image& patch, const Mask& mask) {
  if (patch.height != mask.height || patch.width != mask.width) {
    throw Error(Errc::dim_mismatch, "mask " + std::to_string(mask.width) + "x" +
                                        std::to_string(mask.height) + " vs patch " +
                                        std::to_string(patch.width) + "x" +
                                        std::to_string(patch.height));
  }
  Image out(patch.height, patch.width);
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      if (!mask.at(y, x)) continue;  // out was zero-initialized
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = patch.at(y, x, c);
      }
    }
  }
  return out;
}

namespace {

// Align-corners source coordinate for output index i of n along an axis of m.
double source_coord(int i, int n, int m) {
  if (n <= 1) return 0.0;
  return static_cast<double>(i) * (m - 1) / (n - 1);
}

}  // namespace

Image bilinear_resize(const Image& patch, int target_height, int target_width) {
  if (patch.height < 2 || patch.width < 2) {
    throw Error(Errc::source_too_small, "source " + std::to_string(patch.width) + "x" +
                                            std::to_string(patch.height) + " below 2x2");
  }
  if (target_height < 1 || target_width < 1) {
    throw Error(Errc::invalid_config, "resize target must be at least 1x1");
  }
  Image out(target_height, target_width);
  for (int i = 0; i < target_height; ++i) {
    const double sy = source_coord(i, target_height, patch.height);
    int y0 = static_cast<int>(std::floor(sy));
    if (y0 > patch.height - 2) y0 = patch.height - 2;
    const double fy = sy - y0;
    for (int j = 0; j < target_width; ++j) {
      const double sx = source_coord(j, target_width, patch.width);
      int x0 = static_cast<int>(std::floor(sx));
      if (x0 > patch.width - 2) x0 = patch.width - 2;
      const double fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top =
            patch.at(y0, x0, c) * (1.0 - fx) + patch.at(y0, x0 + 1, c) * fx;
        const double bot =
            patch.at(y0 + 1, x0, c) * (1.0 - fx) + patch.at(y0 + 1, x0 + 1, c) * fx;
        out.at(i, j, c) = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return out;
}

Image bilinear_resize(const Image& patch, const ScalePreset& preset) {
  return bilinear_resize(patch, preset.height, preset.width);
}

ScaleExemplarSet build_exemplar_set(const synthdata::SceneRecord& scene,
                                    const synthdata::PersonGT& person,
                                    const std::vector<ScalePreset>& presets, bool use_mask) {
  if (presets.empty()) {
    throw Error(Errc::invalid_config, "need at least one scale preset");
  }
  validate_presets(presets);
  ScaleExemplarSet out;
  out.instance_index = person.instance_index;
  Image cropped = crop(scene, person);
  out.original_crop = use_mask ? mask_multiply(cropped, person.mask) : std::move(cropped);
  out.scaled_crops.reserve(presets.size());
  for (const ScalePreset& preset : presets) {
    out.scaled_crops.push_back(bilinear_resize(out.original_crop, preset));
  }
  return out;
}

}  // namespace siml::imageops
