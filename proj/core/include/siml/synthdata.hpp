#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "siml/image.hpp"
#include "siml/numkit.hpp"

namespace siml::synthdata {

/// Persistent appearance prototype for one identity: angled stripes
/// alternating between two saturated tones. Stripe phase is anchored to
/// canonical body coordinates, so renders at different scales stay
/// pixel-correlated after resizing.
struct Identity {
  int id = 0;
  std::array<double, 3> tone_a{0.8, 0.2, 0.2};
  std::array<double, 3> tone_b{0.2, 0.2, 0.8};
  double stripe_period = 16.0;   // pixels along y at canonical height
  double stripe_phase = 0.0;     // radians
  double stripe_slant = 0.0;     // cycles per canonical x pixel
  double stripe_contrast = 0.7;  // 0 = even blend, 1 = pure tones
};

struct PersonGT {
  int instance_index = -1;  // global, 0..N-1
  int identity_id = -1;     // eval-only; the training path never reads this
  int x = 0, y = 0, w = 0, h = 0;
  Mask mask;                 // box-sized footprint (interior ellipse)
  double scale_factor = 1.0; // render height / canonical height
};

struct SceneRecord {
  int scene_id = 0;
  Image raster;
  std::vector<PersonGT> persons;
};

struct DatasetConfig {
  int num_identities = 200;
  int num_scenes = 600;
  int min_per_scene = 2;
  int max_per_scene = 4;
  int scene_height = 64;
  int scene_width = 96;
  int canonical_height = 32;
  int canonical_width = 16;
  double scale_min = 0.5;   // configured range must stay within [0.25, 2.0]
  double scale_max = 1.6;
  double noise_level = 0.15;
  std::uint64_t seed = 7;
};

/// Identity labels live outside the scene records so the training path cannot
/// consume them by accident; only evaluation code receives this view.
struct EvalOnlyInfo {
  std::vector<int> identity_of;  // instance index -> identity id
};

struct DatasetManifest {
  std::size_t instance_count = 0;
  int num_identities = 0;
  int num_scenes = 0;
  std::uint64_t seed = 0;
  DatasetConfig render;
  EvalOnlyInfo eval_only;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<SceneRecord> scenes;
};

void validate_config(const DatasetConfig& config);

/// Deterministic given config (the seed lives inside). Scene rasters derive
/// from per-scene substreams of (seed, scene_id).
Dataset generate_dataset(const DatasetConfig& config);

/// One person patch plus its elliptical foreground mask. Patch height is
/// round(canonical_height * scale_factor).
std::pair<Image, Mask> render_person(const Identity& identity, double scale_factor,
                                     const DatasetConfig& config, numkit::Rng& rng);

/// Texture value before noise, at a canonical body coordinate.
double stripe_value(const Identity& identity, double canonical_y, double canonical_x,
                    int channel);

std::vector<int> scene_of_instances(const Dataset& dataset);

double box_iou(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh);

}  // namespace siml::synthdata
