#include "siml/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "siml/error.hpp"

namespace siml::synthdata {

namespace {

constexpr std::uint64_t kStreamIdentities = 0x1D5EED01;
constexpr std::uint64_t kStreamPlan = 0x1D5EED02;
constexpr std::uint64_t kStreamSceneBase = 0x5CE00000;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

int render_height(const DatasetConfig& c, double sf) {
  return static_cast<int>(std::lround(c.canonical_height * sf));
}
int render_width(const DatasetConfig& c, double sf) {
  return static_cast<int>(std::lround(c.canonical_width * sf));
}

}  // namespace

void validate_config(const DatasetConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_config, msg); };
  if (c.num_identities < 2) fail("num_identities must be >= 2");
  if (c.num_scenes < c.num_identities) fail("num_scenes must be >= num_identities");
  if (c.min_per_scene < 1 || c.max_per_scene < c.min_per_scene) {
    fail("per-scene person counts must satisfy 1 <= min <= max");
  }
  if (c.scale_min < 0.25 || c.scale_max > 2.0 || c.scale_min >= c.scale_max) {
    fail("scale factor range must lie within [0.25, 2.0] with min < max");
  }
  if (c.noise_level < 0.0 || c.noise_level > 0.5) fail("noise_level must be in [0, 0.5]");
  if (render_width(c, c.scale_min) < 8 || render_height(c, c.scale_min) < 16) {
    fail("canonical size too small: boxes must stay >= 8x16 at scale_min");
  }
  if (render_height(c, c.scale_max) > c.scene_height ||
      render_width(c, c.scale_max) > c.scene_width) {
    fail("scene too small for the largest render scale");
  }
}

double stripe_value(const Identity& identity, double canonical_y, double canonical_x,
                    int channel) {
  const double phase = 2.0 * std::numbers::pi *
                       (canonical_y / identity.stripe_period + canonical_x * identity.stripe_slant);
  const double w = 0.5 * (1.0 + identity.stripe_contrast * std::sin(phase));
  const std::size_t c = static_cast<std::size_t>(channel);
  return clamp01(w * identity.tone_a[c] + (1.0 - w) * identity.tone_b[c]);
}

std::pair<Image, Mask> render_person(const Identity& identity, double scale_factor,
                                     const DatasetConfig& config, numkit::Rng& rng) {
  const int h = render_height(config, scale_factor);
  const int w = render_width(config, scale_factor);
  Image patch(h, w);
  Mask mask(h, w);
  const double cy = 0.5 * h;
  const double cx = 0.5 * w;
  for (int y = 0; y < h; ++y) {
    // Stripe phase is expressed in canonical body coordinates so two renders
    // of the same identity line up after resizing to a common size.
    const double canonical_y = (y + 0.5) * config.canonical_height / h;
    for (int x = 0; x < w; ++x) {
      const double canonical_x = (x + 0.5) * config.canonical_width / w;
      const double ey = (y + 0.5 - cy) / cy;
      const double ex = (x + 0.5 - cx) / cx;
      mask.at(y, x) = (ey * ey + ex * ex <= 1.0) ? 1 : 0;
      for (int c = 0; c < 3; ++c) {
        const double noise = config.noise_level * (rng.uniform() - 0.5);
        patch.at(y, x, c) = clamp01(stripe_value(identity, canonical_y, canonical_x, c) + noise);
      }
    }
  }
  return {std::move(patch), std::move(mask)};
}

double box_iou(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh) {
  const int ix = std::max(ax, bx);
  const int iy = std::max(ay, by);
  const int ix2 = std::min(ax + aw, bx + bw);
  const int iy2 = std::min(ay + ah, by + bh);
  const double inter =
      static_cast<double>(std::max(0, ix2 - ix)) * std::max(0, iy2 - iy);
  const double uni = static_cast<double>(aw) * ah + static_cast<double>(bw) * bh - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

struct PlannedPerson {
  int identity = 0;
  double scale_factor = 1.0;
};

// Appearance plan: which identities show up in which scene, at which scale.
// Guarantees (capacity permitting): every identity appears in >= 2 scenes, the
// first two appearances use scale factors from disjoint halves of the log
// range, and no scene repeats an identity.
std::vector<std::vector<PlannedPerson>> plan_appearances(const DatasetConfig& c,
                                                         numkit::Rng& rng) {
  const int ids = c.num_identities;
  std::vector<int> capacity(c.num_scenes);
  long total = 0;
  for (int s = 0; s < c.num_scenes; ++s) {
    int p = c.min_per_scene +
            static_cast<int>(rng.below(static_cast<std::uint64_t>(c.max_per_scene - c.min_per_scene + 1)));
    p = std::min(p, ids);
    capacity[s] = p;
    total += p;
  }

  const int target = total >= 2L * ids ? 2 : 1;
  std::vector<int> done(ids, 0);

  const double log_lo = std::log(c.scale_min);
  const double log_hi = std::log(c.scale_max);
  const double log_mid = 0.5 * (log_lo + log_hi);

  std::vector<std::vector<PlannedPerson>> plan(c.num_scenes);
  std::vector<char> in_scene(ids, 0);
  std::vector<int> pool;
  pool.reserve(ids);
  for (int s = 0; s < c.num_scenes; ++s) {
    std::fill(in_scene.begin(), in_scene.end(), 0);
    for (int k = 0; k < capacity[s]; ++k) {
      pool.clear();
      for (int id = 0; id < ids; ++id) {
        if (!in_scene[id] && done[id] < target) pool.push_back(id);
      }
      if (pool.empty()) {
        for (int id = 0; id < ids; ++id) {
          if (!in_scene[id]) pool.push_back(id);
        }
      }
      const int id = pool[rng.below(pool.size())];
      in_scene[id] = 1;
      const int appearance = done[id]++;
      double lo = log_lo, hi = log_hi;
      if (appearance == 0) {
        hi = log_mid;
      } else if (appearance == 1) {
        lo = log_mid;
      }
      plan[s].push_back({id, std::exp(rng.uniform(lo, hi))});
    }
  }
  return plan;
}

void paint_background(Image& raster, double noise_level, numkit::Rng& rng) {
  const int h = raster.height, w = raster.width;
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.2, 0.7);
    gx[c] = rng.uniform(-0.25, 0.25);
    gy[c] = rng.uniform(-0.25, 0.25);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double grad = base[c] + gx[c] * x / (w - 1.0) + gy[c] * y / (h - 1.0);
        raster.at(y, x, c) = clamp01(grad + noise_level * (rng.uniform() - 0.5));
      }
    }
  }
}

// Random placement with IoU constraint; falls back to an exhaustive sweep so a
// person is dropped only when no valid spot exists at all.
bool place_box(int w, int h, const std::vector<PersonGT>& placed, int scene_w, int scene_h,
               numkit::Rng& rng, int* out_x, int* out_y) {
  const int max_x = scene_w - w;
  const int max_y = scene_h - h;
  if (max_x < 0 || max_y < 0) return false;
  auto fits = [&](int x, int y) {
    for (const PersonGT& p : placed) {
      if (box_iou(x, y, w, h, p.x, p.y, p.w, p.h) >= 0.3) return false;
    }
    return true;
  };
  for (int attempt = 0; attempt < 60; ++attempt) {
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_x + 1)));
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_y + 1)));
    if (fits(x, y)) {
      *out_x = x;
      *out_y = y;
      return true;
    }
  }
  for (int y = 0; y <= max_y; y += 2) {
    for (int x = 0; x <= max_x; x += 2) {
      if (fits(x, y)) {
        *out_x = x;
        *out_y = y;
        return true;
      }
    }
  }
  return false;
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& config) {
  validate_config(config);

  numkit::Rng id_rng = numkit::Rng::substream(config.seed, kStreamIdentities);
  // saturated palette: one guaranteed-bright channel, the rest mostly dark,
  // so tones point into different color octants instead of all sitting near
  // the same mid-gray direction
  auto saturated_tone = [&id_rng] {
    std::array<double, 3> tone{};
    const int hot = static_cast<int>(id_rng.below(3));
    for (int c = 0; c < 3; ++c) {
      const bool bright = id_rng.uniform() < 0.25 || c == hot;
      tone[static_cast<std::size_t>(c)] =
          bright ? id_rng.uniform(0.7, 0.95) : id_rng.uniform(0.05, 0.3);
    }
    return tone;
  };
  std::vector<Identity> identities(static_cast<std::size_t>(config.num_identities));
  for (int i = 0; i < config.num_identities; ++i) {
    Identity& ident = identities[static_cast<std::size_t>(i)];
    ident.id = i;
    ident.tone_a = saturated_tone();
    ident.tone_b = saturated_tone();
    ident.stripe_period = id_rng.uniform(4.0, 12.0);
    ident.stripe_slant = id_rng.uniform(-0.12, 0.12);
    ident.stripe_contrast = id_rng.uniform(0.6, 1.0);
  }

  numkit::Rng plan_rng = numkit::Rng::substream(config.seed, kStreamPlan);
  auto plan = plan_appearances(config, plan_rng);

  Dataset out;
  out.scenes.reserve(static_cast<std::size_t>(config.num_scenes));
  for (int s = 0; s < config.num_scenes; ++s) {
    numkit::Rng rng = numkit::Rng::substream(config.seed, kStreamSceneBase + static_cast<std::uint64_t>(s));
    SceneRecord scene;
    scene.scene_id = s;
    scene.raster = Image(config.scene_height, config.scene_width);
    paint_background(scene.raster, config.noise_level, rng);

    auto& appearances = plan[static_cast<std::size_t>(s)];
    std::stable_sort(appearances.begin(), appearances.end(),
                     [](const PlannedPerson& a, const PlannedPerson& b) {
                       return a.scale_factor > b.scale_factor;  // place big first
                     });
    for (const PlannedPerson& pp : appearances) {
      auto [patch, mask] = render_person(identities[static_cast<std::size_t>(pp.identity)],
                                         pp.scale_factor, config, rng);
      int x = 0, y = 0;
      if (!place_box(patch.width, patch.height, scene.persons, config.scene_width,
                     config.scene_height, rng, &x, &y)) {
        continue;  // unplaceable at this density; rare with sane configs
      }
      for (int py = 0; py < patch.height; ++py) {
        for (int px = 0; px < patch.width; ++px) {
          if (!mask.at(py, px)) continue;  // only the ellipse footprint lands on the scene
          for (int c = 0; c < 3; ++c) {
            scene.raster.at(y + py, x + px, c) = patch.at(py, px, c);
          }
        }
      }
      PersonGT person;
      person.identity_id = pp.identity;
      person.x = x;
      person.y = y;
      person.w = patch.width;
      person.h = patch.height;
      person.mask = std::move(mask);
      person.scale_factor = pp.scale_factor;
      scene.persons.push_back(std::move(person));
    }
    out.scenes.push_back(std::move(scene));
  }

  int next_instance = 0;
  for (SceneRecord& scene : out.scenes) {
    for (PersonGT& person : scene.persons) {
      person.instance_index = next_instance++;
      out.manifest.eval_only.identity_of.push_back(person.identity_id);
    }
  }
  out.manifest.instance_count = static_cast<std::size_t>(next_instance);
  out.manifest.num_identities = config.num_identities;
  out.manifest.num_scenes = config.num_scenes;
  out.manifest.seed = config.seed;
  out.manifest.render = config;
  return out;
}

std::vector<int> scene_of_instances(const Dataset& dataset) {
  std::vector<int> scene_of(dataset.manifest.instance_count, -1);
  for (const SceneRecord& scene : dataset.scenes) {
    for (const PersonGT& person : scene.persons) {
      scene_of[static_cast<std::size_t>(person.instance_index)] = scene.scene_id;
    }
  }
  return scene_of;
}

}  // namespace siml::synthdata
