#include "siml/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "siml/error.hpp"

namespace siml::trainer {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kStreamEncoderInit = 0x7311A100ULL;
constexpr std::uint64_t kStreamEpochOrder = 0x7311A200ULL;

/// Runs fn(0..n-1), optionally across worker threads.  Every index writes its
/// own pre-allocated slot, so results do not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> hold(failure_mutex);
          if (!failure) failure = std::current_exception();
          break;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void axpy(numkit::Vec& y, const numkit::Vec& x, double a) {
  for (std::size_t k = 0; k < y.size(); ++k) {
    y[k] += a * x[k];
  }
}

}  // namespace

const char* scale_mode_name(ScaleMode mode) {
  switch (mode) {
    case ScaleMode::multi: return "multi";
    case ScaleMode::one: return "one";
    case ScaleMode::original: return "original";
  }
  return "?";
}

ScaleMode parse_scale_mode(const std::string& name) {
  if (name == "multi") return ScaleMode::multi;
  if (name == "one") return ScaleMode::one;
  if (name == "original") return ScaleMode::original;
  throw Error(Errc::invalid_config,
              "scale_mode must be multi, one or original; got '" + name + "'");
}

void validate(const TrainConfig& config) {
  if (config.epochs < 1) {
    throw Error(Errc::invalid_config, "epochs must be at least 1");
  }
  if (config.batch_scenes < 1) {
    throw Error(Errc::invalid_config, "batch_scenes must be at least 1");
  }
  if (!(config.bank_momentum > 0.0) || !(config.bank_momentum <= 1.0)) {
    throw Error(Errc::invalid_config, "bank_momentum must be in (0, 1]");
  }
  if (!(config.probe_fraction > 0.0) || !(config.probe_fraction <= 1.0)) {
    throw Error(Errc::invalid_config, "probe_fraction must be in (0, 1]");
  }
  if (config.threads < 1) {
    throw Error(Errc::invalid_config, "threads must be at least 1");
  }
  if (!(config.sil.margin >= 0.0) || !std::isfinite(config.sil.margin)) {
    throw Error(Errc::invalid_config, "margin must be finite and non-negative");
  }
  if (!(config.sil.gamma >= 0.0) || !std::isfinite(config.sil.gamma)) {
    throw Error(Errc::invalid_config, "gamma must be finite and non-negative");
  }
  if (config.sgd.learning_rate < 0.0 || config.sgd.momentum < 0.0 ||
      config.sgd.momentum >= 1.0 || config.sgd.weight_decay < 0.0 ||
      !(config.sgd.decay_factor > 0.0) || !(config.sgd.decay_factor <= 1.0)) {
    throw Error(Errc::invalid_config, "optimizer settings out of range");
  }
  if (config.encoder.dim < 2 || config.encoder.grid_h < 1 || config.encoder.grid_w < 1) {
    throw Error(Errc::invalid_config, "encoder needs dim >= 2 and a nonempty grid");
  }
  dmlloss::validate(config.dml);
  labeler::validate(config.threshold);
  labeler::validate(config.dbscan);
  if (!config.presets.empty() && config.scale_mode != ScaleMode::multi) {
    throw Error(Errc::invalid_config, "a preset override requires scale_mode multi");
  }
  effective_presets(config);  // validates the override
}

std::vector<imageops::ScalePreset> effective_presets(const TrainConfig& config) {
  switch (config.scale_mode) {
    case ScaleMode::multi: {
      std::vector<imageops::ScalePreset> presets =
          config.presets.empty() ? imageops::default_presets() : config.presets;
      imageops::validate_presets(presets);
      return presets;
    }
    case ScaleMode::one: {
      const auto all = imageops::default_presets();
      return {all[all.size() / 2]};
    }
    case ScaleMode::original:
      return {};
  }
  throw Error(Errc::invalid_config, "unknown scale mode");
}

std::vector<SceneInputs> build_inputs(const synthdata::Dataset& dataset,
                                      const TrainConfig& config) {
  const auto presets = effective_presets(config);
  const int gh = config.encoder.grid_h;
  const int gw = config.encoder.grid_w;

  std::vector<SceneInputs> out;
  out.reserve(dataset.scenes.size());
  for (const synthdata::SceneRecord& scene : dataset.scenes) {
    SceneInputs si;
    si.scene_id = static_cast<std::size_t>(scene.scene_id);
    si.persons.reserve(scene.persons.size());
    for (const synthdata::PersonGT& person : scene.persons) {
      PooledExemplars pe;
      pe.instance = static_cast<std::size_t>(person.instance_index);
      const Image raw = imageops::crop(scene, person);
      pe.inst_pooled = encoder::grid_pool(raw, gh, gw);
      if (config.use_mask) {
        const Image masked = imageops::mask_multiply(raw, person.mask);
        pe.orig_pooled = encoder::grid_pool(masked, gh, gw);
        for (const imageops::ScalePreset& p : presets) {
          pe.scaled_pooled.push_back(
              encoder::grid_pool(imageops::bilinear_resize(masked, p), gh, gw));
        }
      } else {
        pe.orig_pooled = pe.inst_pooled;
        for (const imageops::ScalePreset& p : presets) {
          pe.scaled_pooled.push_back(
              encoder::grid_pool(imageops::bilinear_resize(raw, p), gh, gw));
        }
      }
      if (presets.empty()) {
        // original mode: the unresized crop stands in as the single "scale"
        pe.scaled_pooled = {pe.orig_pooled};
      }
      si.persons.push_back(std::move(pe));
    }
    out.push_back(std::move(si));
  }
  return out;
}

TrainState init_state(const TrainConfig& config, std::size_t instance_count) {
  validate(config);
  if (instance_count == 0) {
    throw Error(Errc::empty_batch, "cannot train on zero instances");
  }
  TrainState state;
  numkit::Rng rng = numkit::Rng::substream(config.seed, kStreamEncoderInit);
  state.params = encoder::init_params(config.encoder, rng);
  state.sgd = encoder::init_sgd(config.sgd, state.params);
  state.instance_bank =
      membank::MemoryBank(instance_count, static_cast<std::size_t>(config.encoder.dim),
                          config.bank_momentum, config.bank_renormalize);
  state.holistic_bank =
      membank::MemoryBank(instance_count, static_cast<std::size_t>(config.encoder.dim),
                          config.bank_momentum, config.bank_renormalize);
  return state;
}

namespace {

struct EncodedPerson {
  const PooledExemplars* in = nullptr;
  encoder::ForwardTrace inst;
  encoder::ForwardTrace orig;
  std::vector<encoder::ForwardTrace> scaled;
  membank::HolisticTrace holistic;
  numkit::Vec g_inst, g_orig, g_holistic;
  std::vector<numkit::Vec> g_scaled;
  double dml_value = 0.0;
  double cluster_value = 0.0;
};

}  // namespace

StepBreakdown train_step(TrainState& state, const TrainConfig& config,
                         const std::vector<const SceneInputs*>& batch,
                         std::ostream* warnings) {
  if (batch.empty()) {
    throw Error(Errc::empty_batch, "train step got an empty batch");
  }
  StepBreakdown breakdown;

  std::vector<const SceneInputs*> kept;
  kept.reserve(batch.size());
  for (const SceneInputs* scene : batch) {
    if (scene->persons.empty()) {
      ++breakdown.skipped_scenes;
      if (warnings) {
        *warnings << "warning: scene " << scene->scene_id << " has no persons; skipped\n";
      }
      continue;
    }
    kept.push_back(scene);
  }
  if (kept.empty()) {
    return breakdown;
  }

  std::vector<std::vector<EncodedPerson>> scenes(kept.size());
  struct Slot {
    std::size_t scene;
    std::size_t person;
  };
  std::vector<Slot> slots;
  for (std::size_t s = 0; s < kept.size(); ++s) {
    scenes[s].resize(kept[s]->persons.size());
    for (std::size_t p = 0; p < kept[s]->persons.size(); ++p) {
      slots.push_back({s, p});
    }
  }
  breakdown.persons = slots.size();
  const std::size_t dim = state.params.weights.rows;

  parallel_for(slots.size(), config.threads, [&](std::size_t t) {
    EncodedPerson& ep = scenes[slots[t].scene][slots[t].person];
    const PooledExemplars& in = kept[slots[t].scene]->persons[slots[t].person];
    ep.in = &in;
    ep.inst = encoder::forward_pooled(state.params, in.inst_pooled);
    ep.orig = encoder::forward_pooled(state.params, in.orig_pooled);
    ep.scaled.reserve(in.scaled_pooled.size());
    for (const numkit::Vec& pooled : in.scaled_pooled) {
      ep.scaled.push_back(encoder::forward_pooled(state.params, pooled));
    }
    std::vector<numkit::Vec> scaled_features;
    scaled_features.reserve(ep.scaled.size());
    for (const encoder::ForwardTrace& tr : ep.scaled) {
      scaled_features.push_back(tr.feature);
    }
    ep.holistic = membank::holistic_feature(ep.orig.feature, scaled_features);
    ep.g_inst.assign(dim, 0.0);
    ep.g_orig.assign(dim, 0.0);
    ep.g_holistic.assign(dim, 0.0);
    ep.g_scaled.assign(ep.scaled.size(), numkit::Vec(dim, 0.0));
  });

  const bool use_sl = config.toggles.scale_loss;
  const bool use_dml = config.toggles.ml_loss && state.have_labels;
  const bool use_cluster = config.toggles.cluster_loss && state.have_labels;
  const double inv_scenes = 1.0 / static_cast<double>(kept.size());
  const double inv_persons = 1.0 / static_cast<double>(slots.size());

  if (use_sl) {
    double sl_sum = 0.0;
    for (std::size_t s = 0; s < kept.size(); ++s) {
      silloss::SceneFeatures sf;
      sf.persons.reserve(scenes[s].size());
      for (const EncodedPerson& ep : scenes[s]) {
        silloss::PersonFeatures pf;
        pf.instance = ep.inst.feature;
        pf.original = ep.orig.feature;
        pf.scaled.reserve(ep.scaled.size());
        for (const encoder::ForwardTrace& tr : ep.scaled) {
          pf.scaled.push_back(tr.feature);
        }
        sf.persons.push_back(std::move(pf));
      }
      sl_sum += silloss::scene_loss(sf, config.sil).value;
      const silloss::SceneGradients grads = silloss::scene_loss_grad(sf, config.sil);
      for (std::size_t p = 0; p < scenes[s].size(); ++p) {
        EncodedPerson& ep = scenes[s][p];
        axpy(ep.g_inst, grads.d_instance[p], inv_scenes);
        axpy(ep.g_orig, grads.d_original[p], inv_scenes);
        for (std::size_t k = 0; k < ep.g_scaled.size(); ++k) {
          axpy(ep.g_scaled[k], grads.d_scaled[p][k], inv_scenes);
        }
      }
    }
    breakdown.sl = sl_sum * inv_scenes;
  }

  if (use_dml || use_cluster) {
    parallel_for(slots.size(), config.threads, [&](std::size_t t) {
      EncodedPerson& ep = scenes[slots[t].scene][slots[t].person];
      const std::size_t idx = ep.in->instance;
      if (use_dml) {
        const dmlloss::DmlResult r =
            dmlloss::dml_total(state.instance_bank, state.holistic_bank, ep.inst.feature,
                               ep.holistic.feature, state.labels, idx, config.dml);
        ep.dml_value = r.value;
        axpy(ep.g_inst, r.d_instance_feature, inv_persons);
        axpy(ep.g_holistic, r.d_holistic_feature, inv_persons);
      }
      if (use_cluster) {
        const dmlloss::ClusterLossResult c = dmlloss::cluster_loss(
            state.centroids, ep.inst.feature, state.clusters.cluster_of[idx], config.dml);
        ep.cluster_value = c.value;
        axpy(ep.g_inst, c.d_feature, inv_persons);
      }
    });
    for (const auto& scene : scenes) {
      for (const EncodedPerson& ep : scene) {
        breakdown.dml += ep.dml_value * inv_persons;
        breakdown.cluster += ep.cluster_value * inv_persons;
      }
    }
  }
  breakdown.total = breakdown.sl + breakdown.dml + breakdown.cluster;

  if (use_sl || use_dml || use_cluster) {
    numkit::Mat dweights(state.params.weights.rows, state.params.weights.cols, 0.0);
    for (auto& scene : scenes) {
      for (EncodedPerson& ep : scene) {
        if (use_dml) {
          const numkit::Vec share = membank::holistic_input_grad(ep.holistic, ep.g_holistic);
          axpy(ep.g_orig, share, 1.0);
          for (numkit::Vec& g : ep.g_scaled) {
            axpy(g, share, 1.0);
          }
        }
        encoder::accumulate_backward(state.params, ep.inst, ep.g_inst, 1.0, dweights);
        encoder::accumulate_backward(state.params, ep.orig, ep.g_orig, 1.0, dweights);
        for (std::size_t k = 0; k < ep.scaled.size(); ++k) {
          encoder::accumulate_backward(state.params, ep.scaled[k], ep.g_scaled[k], 1.0,
                                       dweights);
        }
      }
    }
    encoder::sgd_step(state.params, state.sgd, dweights, state.epoch);
  }

  for (const auto& scene : scenes) {
    for (const EncodedPerson& ep : scene) {
      state.instance_bank.update(ep.in->instance, ep.inst.feature);
      state.holistic_bank.update(ep.in->instance, ep.holistic.feature);
    }
  }
  return breakdown;
}

void epoch_boundary(TrainState& state, const TrainConfig& config,
                    const std::vector<std::size_t>& scene_of) {
  if (state.instance_bank.fully_initialized() && state.holistic_bank.fully_initialized()) {
    const numkit::Mat fused = membank::fuse(state.instance_bank, state.holistic_bank);
    state.label_similarity = membank::similarity(fused);
    const double threshold = labeler::dynamic_threshold(config.threshold, state.epoch);
    state.labels = labeler::build_label_sets(state.label_similarity, scene_of, threshold);
    numkit::Mat distances = state.label_similarity;
    for (double& v : distances.data) {
      v = 1.0 - v;
    }
    state.clusters = labeler::dbscan_from_distances(distances, config.dbscan);
    state.centroids = dmlloss::compute_centroids(fused, state.clusters);
    state.have_labels = true;
  }
  state.epoch += 1;
}

ProbeSplit probe_split(const std::vector<int>& identity_of, double fraction) {
  if (identity_of.empty()) {
    throw Error(Errc::empty_batch, "probe split over zero instances");
  }
  if (!(fraction > 0.0) || !(fraction <= 1.0)) {
    throw Error(Errc::invalid_config, "probe fraction must be in (0, 1]");
  }
  std::vector<int> ids(identity_of);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const auto probe_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size()))));
  const int cutoff = ids[ids.size() - std::min(probe_count, ids.size())];

  // instances per probe identity, in ascending instance order
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < identity_of.size(); ++i) {
    if (identity_of[i] >= cutoff) {
      members[identity_of[i]].push_back(i);
    }
  }
  ProbeSplit split;
  for (const auto& [id, instances] : members) {
    if (instances.size() >= 2) {
      split.queries.push_back(instances.front());
      split.gallery.insert(split.gallery.end(), instances.begin() + 1, instances.end());
    } else {
      split.gallery.push_back(instances.front());
    }
  }
  if (split.queries.empty()) {
    throw Error(Errc::empty_batch,
                "no probe identity appears twice; cannot build an evaluation split");
  }
  return split;
}

numkit::Mat embed_instances(const encoder::EncoderParams& params,
                            const std::vector<SceneInputs>& inputs,
                            std::size_t instance_count) {
  numkit::Mat features(instance_count, params.weights.rows);
  std::vector<unsigned char> seen(instance_count, 0);
  for (const SceneInputs& scene : inputs) {
    for (const PooledExemplars& person : scene.persons) {
      if (person.instance >= instance_count) {
        throw Error(Errc::index_out_of_range, "instance index outside dataset range");
      }
      if (seen[person.instance]) {
        throw Error(Errc::invalid_config, "instance appears in two scenes");
      }
      seen[person.instance] = 1;
      const encoder::ForwardTrace trace = encoder::forward_pooled(params, person.inst_pooled);
      std::copy(trace.feature.begin(), trace.feature.end(),
                features.row(person.instance));
    }
  }
  for (std::size_t i = 0; i < instance_count; ++i) {
    if (!seen[i]) {
      throw Error(Errc::uninitialized_slot,
                  "instance " + std::to_string(i) + " missing from the scene inputs");
    }
  }
  return features;
}

void save_epoch_checkpoint(const fs::path& ckpt_root, const TrainState& state,
                           const evalkit::MetricsRow& row, std::uint64_t seed) {
  const fs::path dir = ckpt_root / ("epoch_" + std::to_string(row.epoch));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(Errc::io_failure, "cannot create " + dir.string() + ": " + ec.message());
  }
  encoder::save_checkpoint((dir / "encoder.bin").string(), state.params, state.sgd,
                           static_cast<int>(row.epoch));
  {
    std::ofstream banks(dir / "banks.bin", std::ios::binary);
    if (!banks) {
      throw Error(Errc::io_failure, "cannot open " + (dir / "banks.bin").string());
    }
    membank::save_banks(banks, state.instance_bank, state.holistic_bank);
    if (!banks) {
      throw Error(Errc::io_failure, "failed writing " + (dir / "banks.bin").string());
    }
  }
  // meta.json last: its presence marks the checkpoint complete
  nlohmann::ordered_json meta{
      {"format", "siml.ckpt-meta"},
      {"version", 1},
      {"epoch", row.epoch},
      {"seed", seed},
      {"dim", state.params.dim},
      {"instances", state.instance_bank.size()},
      {"metrics",
       nlohmann::ordered_json{{"loss_total", row.loss_total},
                              {"loss_sl", row.loss_sl},
                              {"loss_dml", row.loss_dml},
                              {"loss_cluster", row.loss_cluster},
                              {"label_precision", row.label_precision},
                              {"label_recall", row.label_recall},
                              {"map", row.map},
                              {"top1", row.top1},
                              {"threshold", row.threshold}}},
  };
  std::ofstream meta_out(dir / "meta.json", std::ios::binary);
  if (!meta_out) {
    throw Error(Errc::io_failure, "cannot open " + (dir / "meta.json").string());
  }
  meta_out << meta.dump(2) << '\n';
  if (!meta_out) {
    throw Error(Errc::io_failure, "failed writing " + (dir / "meta.json").string());
  }
}

int find_latest_checkpoint(const fs::path& ckpt_root) {
  std::error_code ec;
  if (!fs::is_directory(ckpt_root, ec)) {
    return -1;
  }
  int best = -1;
  for (const fs::directory_entry& entry : fs::directory_iterator(ckpt_root, ec)) {
    if (ec) break;
    const std::string name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) != 0) continue;
    const std::string digits = name.substr(6);
    if (digits.empty() ||
        digits.find_first_not_of("0123456789") != std::string::npos) {
      continue;
    }
    if (!fs::exists(entry.path() / "meta.json")) continue;  // incomplete write
    best = std::max(best, std::stoi(digits));
  }
  return best;
}

RunResult run(const synthdata::Dataset& dataset, const TrainConfig& config,
              const RunOptions& options) {
  validate(config);
  const std::size_t instance_count = dataset.manifest.instance_count;
  if (dataset.scenes.empty() || instance_count == 0) {
    throw Error(Errc::empty_batch, "dataset holds no scenes or no instances");
  }
  const std::vector<int> scene_of_int = synthdata::scene_of_instances(dataset);
  const std::vector<std::size_t> scene_of(scene_of_int.begin(), scene_of_int.end());
  const std::vector<SceneInputs> inputs = build_inputs(dataset, config);
  const std::vector<int>& identity_of = dataset.manifest.eval_only.identity_of;
  const ProbeSplit probe = probe_split(identity_of, config.probe_fraction);

  TrainState state = init_state(config, instance_count);

  const bool to_disk = !options.out_dir.empty();
  std::ofstream metrics_out, quality_out, labels_out;
  fs::path ckpt_root;
  if (to_disk) {
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    if (ec) {
      throw Error(Errc::io_failure,
                  "cannot create " + options.out_dir.string() + ": " + ec.message());
    }
    metrics_out.open(options.out_dir / "metrics.csv", std::ios::binary);
    quality_out.open(options.out_dir / "quality.csv", std::ios::binary);
    if (!metrics_out || !quality_out) {
      throw Error(Errc::io_failure, "cannot open metric files under " +
                                        options.out_dir.string());
    }
    evalkit::write_metrics_header(metrics_out);
    evalkit::write_quality_header(quality_out);
    if (options.write_labels) {
      labels_out.open(options.out_dir / "labels.csv", std::ios::binary);
      if (!labels_out) {
        throw Error(Errc::io_failure, "cannot open labels.csv under " +
                                          options.out_dir.string());
      }
      labeler::write_label_dump_header(labels_out);
    }
    ckpt_root = options.out_dir / "ckpt";
  }

  RunResult result;
  std::vector<std::size_t> order(inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int e = 0; e < config.epochs; ++e) {
    numkit::Rng order_rng =
        numkit::Rng::substream(config.seed, kStreamEpochOrder + static_cast<std::uint64_t>(e));
    numkit::shuffle(order, order_rng);

    double sum_total = 0.0, sum_sl = 0.0, sum_dml = 0.0, sum_cluster = 0.0;
    std::size_t steps = 0;
    const std::size_t batch = static_cast<std::size_t>(config.batch_scenes);
    std::vector<const SceneInputs*> batch_view;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      batch_view.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + batch); ++i) {
        batch_view.push_back(&inputs[order[i]]);
      }
      const StepBreakdown br = train_step(state, config, batch_view, options.log);
      sum_total += br.total;
      sum_sl += br.sl;
      sum_dml += br.dml;
      sum_cluster += br.cluster;
      ++steps;
    }

    epoch_boundary(state, config, scene_of);
    if (!state.have_labels) {
      throw Error(Errc::uninitialized_slot,
                  "banks still incomplete after an epoch; dataset instance "
                  "indices are likely not unique");
    }

    const numkit::Mat features = embed_instances(state.params, inputs, instance_count);
    const evalkit::RetrievalReport report =
        evalkit::retrieval(features, probe.queries, probe.gallery, identity_of);
    const evalkit::PairQuality lq = evalkit::label_quality(state.labels, identity_of);
    const evalkit::PairQuality cq = evalkit::cluster_quality(state.clusters, identity_of);

    evalkit::MetricsRow row;
    row.epoch = static_cast<std::size_t>(e);
    const double inv_steps = steps > 0 ? 1.0 / static_cast<double>(steps) : 0.0;
    row.loss_total = sum_total * inv_steps;
    row.loss_sl = sum_sl * inv_steps;
    row.loss_dml = sum_dml * inv_steps;
    row.loss_cluster = sum_cluster * inv_steps;
    row.label_precision = lq.precision;
    row.label_recall = lq.recall;
    row.map = report.map;
    row.top1 = report.top1;
    row.threshold = labeler::dynamic_threshold(config.threshold, e);
    result.metrics.push_back(row);
    result.quality.push_back({static_cast<std::size_t>(e), lq.precision, lq.recall,
                              cq.precision, cq.recall, lq.no_predicted_pairs,
                              cq.no_predicted_pairs});
    result.final_eval = report;

    if (to_disk) {
      evalkit::append_metrics_row(metrics_out, row);
      metrics_out.flush();
      evalkit::append_quality_row(quality_out, result.quality.back());
      quality_out.flush();
      if (options.write_labels) {
        labeler::append_label_dump(labels_out, static_cast<std::size_t>(e), state.labels,
                                   state.clusters);
        labels_out.flush();
      }
      if (options.write_checkpoints) {
        save_epoch_checkpoint(ckpt_root, state, row, config.seed);
      }
      if (!metrics_out || !quality_out) {
        throw Error(Errc::io_failure, "failed writing metric files");
      }
    }
    if (options.log) {
      *options.log << "epoch " << (e + 1) << "/" << config.epochs << "  loss "
                   << row.loss_total << "  map " << row.map << "  top1 " << row.top1
                   << "  label_p " << row.label_precision << "\n";
      options.log->flush();
    }
  }

  if (to_disk && options.write_plots) {
    evalkit::emit_plots(result.metrics, result.quality, options.out_dir);
  }
  result.state = std::move(state);
  return result;
}

}  // namespace siml::trainer
