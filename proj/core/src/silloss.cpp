#include "siml/silloss.hpp"

#include <string>

#include "siml/error.hpp"

namespace siml::silloss {

namespace {

void check_scene(const SceneFeatures& scene) {
  if (scene.persons.empty()) {
    throw Error(Errc::empty_batch, "scene has no persons");
  }
  const std::size_t k = scene.persons.front().scaled.size();
  if (k == 0) {
    throw Error(Errc::invalid_config, "need at least one augmented scale");
  }
  for (const PersonFeatures& p : scene.persons) {
    if (p.scaled.size() != k) {
      throw Error(Errc::dim_mismatch, "persons disagree on scale count");
    }
  }
}

struct PersonTerms {
  HardSelection sel;
  double anchor_dist = 0.0;
};

PersonTerms analyze_person(const SceneFeatures& scene, std::size_t i, const SilConfig& config) {
  const PersonFeatures& self = scene.persons[i];
  const std::size_t num_scales = self.scaled.size();
  PersonTerms t;

  // Hard positive: the most distant augmented scale of the same person.
  // The original scale is not in this pool; it is handled by the anchor term.
  for (std::size_t s = 0; s < num_scales; ++s) {
    const double d = numkit::sqdist(self.instance, self.scaled[s]);
    if (t.sel.pos_scale < 0 || d > t.sel.pos_dist) {
      t.sel.pos_scale = static_cast<int>(s);
      t.sel.pos_dist = d;
    }
  }

  // Hard negative: the closest exemplar of any other person, over the
  // augmented scales and the original scale.
  for (std::size_t j = 0; j < scene.persons.size(); ++j) {
    if (j == i) continue;
    const PersonFeatures& other = scene.persons[j];
    for (std::size_t s = 0; s <= num_scales; ++s) {
      const numkit::Vec& cand = (s < num_scales) ? other.scaled[s] : other.original;
      const double d = numkit::sqdist(self.instance, cand);
      if (t.sel.neg_person < 0 || d < t.sel.neg_dist) {
        t.sel.neg_person = static_cast<int>(j);
        t.sel.neg_scale = static_cast<int>(s);
        t.sel.neg_dist = d;
      }
    }
  }

  if (t.sel.neg_person >= 0) {
    t.sel.hinge_active = config.margin + t.sel.pos_dist - t.sel.neg_dist > 0.0;
  }
  t.anchor_dist = numkit::sqdist(self.instance, self.original);
  return t;
}

}  // namespace

SceneLossResult scene_loss(const SceneFeatures& scene, const SilConfig& config) {
  check_scene(scene);
  const std::size_t persons = scene.persons.size();
  SceneLossResult result;
  result.selections.reserve(persons);
  double total = 0.0;
  for (std::size_t i = 0; i < persons; ++i) {
    const PersonTerms t = analyze_person(scene, i, config);
    if (t.sel.hinge_active) {
      total += config.margin + t.sel.pos_dist - t.sel.neg_dist;
    }
    total += config.gamma * t.anchor_dist;
    result.selections.push_back(t.sel);
  }
  result.value = total / static_cast<double>(persons);
  return result;
}

namespace {

// grad += scale * 2 (a - b), the derivative of sqdist(a, b) in a.
void add_sqdist_grad(numkit::Vec& grad, const numkit::Vec& a, const numkit::Vec& b,
                     double scale) {
  for (std::size_t k = 0; k < grad.size(); ++k) {
    grad[k] += scale * 2.0 * (a[k] - b[k]);
  }
}

}  // namespace

SceneGradients scene_loss_grad(const SceneFeatures& scene, const SilConfig& config) {
  check_scene(scene);
  const std::size_t persons = scene.persons.size();
  const std::size_t dim = scene.persons.front().instance.size();
  const std::size_t num_scales = scene.persons.front().scaled.size();

  SceneGradients grads;
  grads.d_instance.assign(persons, numkit::Vec(dim, 0.0));
  grads.d_scaled.assign(persons, std::vector<numkit::Vec>(num_scales, numkit::Vec(dim, 0.0)));
  grads.d_original.assign(persons, numkit::Vec(dim, 0.0));

  const double inv_p = 1.0 / static_cast<double>(persons);
  for (std::size_t i = 0; i < persons; ++i) {
    const PersonFeatures& self = scene.persons[i];
    const PersonTerms t = analyze_person(scene, i, config);
    if (t.sel.hinge_active) {
      const auto hp = static_cast<std::size_t>(t.sel.pos_scale);
      add_sqdist_grad(grads.d_instance[i], self.instance, self.scaled[hp], inv_p);
      add_sqdist_grad(grads.d_scaled[i][hp], self.scaled[hp], self.instance, inv_p);

      const auto nj = static_cast<std::size_t>(t.sel.neg_person);
      const auto ns = static_cast<std::size_t>(t.sel.neg_scale);
      const numkit::Vec& neg =
          (ns < num_scales) ? scene.persons[nj].scaled[ns] : scene.persons[nj].original;
      add_sqdist_grad(grads.d_instance[i], self.instance, neg, -inv_p);
      numkit::Vec& neg_grad =
          (ns < num_scales) ? grads.d_scaled[nj][ns] : grads.d_original[nj];
      add_sqdist_grad(neg_grad, neg, self.instance, -inv_p);
    }
    if (config.gamma != 0.0) {
      add_sqdist_grad(grads.d_instance[i], self.instance, self.original, config.gamma * inv_p);
      add_sqdist_grad(grads.d_original[i], self.original, self.instance, config.gamma * inv_p);
    }
  }
  return grads;
}

double batch_loss(const std::vector<SceneFeatures>& scenes, const SilConfig& config) {
  if (scenes.empty()) {
    throw Error(Errc::empty_batch, "batch has no scenes");
  }
  double total = 0.0;
  for (const SceneFeatures& scene : scenes) {
    total += scene_loss(scene, config).value;
  }
  return total / static_cast<double>(scenes.size());
}

}  // namespace siml::silloss
