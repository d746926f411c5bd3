#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "siml/numkit.hpp"

namespace siml::labeler {

/// Schedule for the similarity cut-off used when turning the bank similarity
/// matrix into per-instance positive candidates.  The cut-off starts at
/// start + amplitude and relaxes toward start as training progresses:
///
///   threshold(epoch) = start + amplitude * exp(decay * epoch)
struct ThresholdConfig {
  double start = 0.6;
  double amplitude = 0.1;
  double decay = -0.1;
};

void validate(const ThresholdConfig& config);
double dynamic_threshold(const ThresholdConfig& config, std::size_t epoch);

/// Per-row candidate lists: j is a candidate for i when similarity(i, j) is at
/// least the threshold.  Rows include the instance itself (self-similarity of
/// unit features is 1).
std::vector<std::vector<std::size_t>> binarize(const numkit::Mat& similarity,
                                               double threshold);

/// Drop candidates that collide with the scene-exclusivity rule: a person
/// appears at most once per scene, so an instance never labels something from
/// its own scene as itself, and accepts at most one candidate per foreign
/// scene.  Candidates are considered in descending similarity to `instance`
/// (ties by ascending index); an accepted candidate blocks the rest of its
/// scene.  The instance itself is never returned.
std::vector<std::size_t> refine_candidates(std::size_t instance,
                                           const std::vector<std::size_t>& candidates,
                                           const numkit::Mat& similarity,
                                           const std::vector<std::size_t>& scene_of);

struct PseudoLabelSet {
  /// Ascending positive indices per instance; always contains the instance
  /// itself.
  std::vector<std::vector<std::size_t>> positives;

  std::size_t size() const { return positives.size(); }
  bool is_positive(std::size_t i, std::size_t j) const;
};

/// Threshold + refine every row of the similarity matrix.
PseudoLabelSet build_label_sets(const numkit::Mat& similarity,
                                const std::vector<std::size_t>& scene_of,
                                double threshold);

/// Density clustering over cosine distance (1 - dot of unit rows).
struct DbscanConfig {
  double eps = 0.6;
  std::size_t min_pts = 2;  // neighbourhood size needed for a core point; the
                            // neighbourhood always counts the point itself
};

void validate(const DbscanConfig& config);

struct ClusterAssignment {
  std::vector<std::size_t> cluster_of;  // instance -> cluster id, 0-based dense
  std::vector<unsigned char> is_noise;  // 1 where the point matched no core
  std::size_t num_clusters = 0;

  std::size_t size() const { return cluster_of.size(); }
};

/// Cluster from a precomputed symmetric distance matrix.
ClusterAssignment dbscan_from_distances(const numkit::Mat& distances,
                                        const DbscanConfig& config);

/// Cluster unit-norm feature rows with cosine distance.
ClusterAssignment dbscan(const numkit::Mat& rows, const DbscanConfig& config);

/// labels.csv: one row per instance per epoch.
void write_label_dump_header(std::ostream& out);
void append_label_dump(std::ostream& out, std::size_t epoch, const PseudoLabelSet& labels,
                       const ClusterAssignment& clusters);

}  // namespace siml::labeler
