#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "siml/dmlloss.hpp"
#include "siml/encoder.hpp"
#include "siml/evalkit.hpp"
#include "siml/imageops.hpp"
#include "siml/labeler.hpp"
#include "siml/membank.hpp"
#include "siml/silloss.hpp"
#include "siml/synthdata.hpp"

namespace siml::trainer {

/// How many resized copies of each person feed the scale-alignment loss.
///   multi    - the full preset pyramid
///   one      - a single mid-size preset
///   original - no resizing at all; the crop doubles as its own "scale"
enum class ScaleMode { multi, one, original };

const char* scale_mode_name(ScaleMode mode);
ScaleMode parse_scale_mode(const std::string& name);

struct LossToggles {
  bool scale_loss = true;
  bool ml_loss = true;
  bool cluster_loss = true;
};

struct TrainConfig {
  encoder::EncoderConfig encoder;
  encoder::SgdConfig sgd;
  silloss::SilConfig sil;
  dmlloss::DmlConfig dml;
  labeler::ThresholdConfig threshold;
  labeler::DbscanConfig dbscan;
  LossToggles toggles;
  double bank_momentum = 0.8;
  bool bank_renormalize = true;
  int epochs = 26;
  int batch_scenes = 2;
  ScaleMode scale_mode = ScaleMode::multi;
  bool use_mask = true;
  /// Optional pyramid override; only legal with ScaleMode::multi.  Empty means
  /// the built-in presets for the chosen mode.
  std::vector<imageops::ScalePreset> presets;
  double probe_fraction = 0.2;
  int threads = 1;
  std::uint64_t seed = 1;
};

void validate(const TrainConfig& config);

/// Presets implied by scale_mode (and the optional override).  Empty for
/// ScaleMode::original.
std::vector<imageops::ScalePreset> effective_presets(const TrainConfig& config);

/// Grid-pooled inputs for one person.  Pooling has no trainable parameters,
/// so these are computed once per run and reused every step.
struct PooledExemplars {
  std::size_t instance = 0;
  numkit::Vec inst_pooled;                 // raw crop
  numkit::Vec orig_pooled;                 // masked crop; == inst_pooled without mask
  std::vector<numkit::Vec> scaled_pooled;  // one per preset (the crop itself in
                                           // original mode)
};

struct SceneInputs {
  std::size_t scene_id = 0;
  std::vector<PooledExemplars> persons;
};

std::vector<SceneInputs> build_inputs(const synthdata::Dataset& dataset,
                                      const TrainConfig& config);

struct TrainState {
  encoder::EncoderParams params;
  encoder::SgdState sgd;
  membank::MemoryBank instance_bank;
  membank::MemoryBank holistic_bank;
  labeler::PseudoLabelSet labels;
  labeler::ClusterAssignment clusters;
  dmlloss::ClusterCentroids centroids;
  numkit::Mat label_similarity;  // snapshot the current labels were built from
  bool have_labels = false;
  int epoch = 0;
};

TrainState init_state(const TrainConfig& config, std::size_t instance_count);

struct StepBreakdown {
  double total = 0.0;
  double sl = 0.0;
  double dml = 0.0;
  double cluster = 0.0;
  std::size_t persons = 0;
  std::size_t skipped_scenes = 0;
};

/// One optimizer step over a batch of scenes: encode, evaluate the active
/// losses, apply SGD, then fold the fresh features into both banks.  The
/// multi-label and cluster terms engage only once labels exist (after the
/// first epoch boundary).  Scenes without persons are skipped with a warning
/// on `warnings` if given.  When no loss term is active the parameters stay
/// untouched but bank updates still happen.
StepBreakdown train_step(TrainState& state, const TrainConfig& config,
                         const std::vector<const SceneInputs*>& batch,
                         std::ostream* warnings = nullptr);

/// Fuse banks, rebuild labels at this epoch's threshold, re-cluster, refresh
/// centroids, then advance the epoch counter.  Does nothing label-related
/// until both banks are fully written.
void epoch_boundary(TrainState& state, const TrainConfig& config,
                    const std::vector<std::size_t>& scene_of);

/// Deterministic evaluation split: the top `fraction` of identity ids are
/// probes; the lowest instance of each probe identity queries, every other
/// probe-identity instance goes to the gallery (single-instance identities
/// contribute distractors only).
struct ProbeSplit {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> gallery;
};

ProbeSplit probe_split(const std::vector<int>& identity_of, double fraction);

/// Raw-crop feature of every instance under the current encoder.
numkit::Mat embed_instances(const encoder::EncoderParams& params,
                            const std::vector<SceneInputs>& inputs,
                            std::size_t instance_count);

/// ckpt/epoch_<e>/{encoder.bin, banks.bin, meta.json}; meta.json is written
/// last and marks the checkpoint complete.
void save_epoch_checkpoint(const std::filesystem::path& ckpt_root,
                           const TrainState& state, const evalkit::MetricsRow& row,
                           std::uint64_t seed);

/// Largest epoch under `ckpt_root` whose directory holds meta.json, or -1.
int find_latest_checkpoint(const std::filesystem::path& ckpt_root);

struct RunOptions {
  std::filesystem::path out_dir;  // empty -> keep everything in memory
  bool write_checkpoints = true;
  bool write_labels = true;
  bool write_plots = true;
  std::ostream* log = nullptr;
};

struct RunResult {
  TrainState state;
  std::vector<evalkit::MetricsRow> metrics;
  std::vector<evalkit::QualityRow> quality;
  evalkit::RetrievalReport final_eval;
};

RunResult run(const synthdata::Dataset& dataset, const TrainConfig& config,
              const RunOptions& options);

}  // namespace siml::trainer
