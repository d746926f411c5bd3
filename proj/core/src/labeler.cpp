#include "siml/labeler.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>

#include "siml/error.hpp"

namespace siml::labeler {

void validate(const ThresholdConfig& config) {
  if (!std::isfinite(config.start) || !std::isfinite(config.amplitude) ||
      !std::isfinite(config.decay)) {
    throw Error(Errc::invalid_config, "threshold schedule has non-finite terms");
  }
  if (config.start <= -1.0 || config.start >= 1.0) {
    throw Error(Errc::invalid_config, "threshold start must lie in (-1, 1)");
  }
  if (config.amplitude < 0.0) {
    throw Error(Errc::invalid_config, "threshold amplitude must be non-negative");
  }
  if (config.decay > 0.0) {
    throw Error(Errc::invalid_config, "threshold decay must not grow with epochs");
  }
  if (config.start + config.amplitude >= 1.0) {
    throw Error(Errc::invalid_config, "initial threshold would reject self-matches");
  }
}

double dynamic_threshold(const ThresholdConfig& config, std::size_t epoch) {
  return config.start + config.amplitude * std::exp(config.decay * static_cast<double>(epoch));
}

namespace {

void check_square(const numkit::Mat& m, const char* what) {
  if (m.rows != m.cols) {
    throw Error(Errc::dim_mismatch, std::string(what) + " matrix is not square");
  }
}

}  // namespace

std::vector<std::vector<std::size_t>> binarize(const numkit::Mat& similarity,
                                               double threshold) {
  check_square(similarity, "similarity");
  std::vector<std::vector<std::size_t>> out(similarity.rows);
  for (std::size_t i = 0; i < similarity.rows; ++i) {
    for (std::size_t j = 0; j < similarity.cols; ++j) {
      if (similarity.at(i, j) >= threshold) {
        out[i].push_back(j);
      }
    }
  }
  return out;
}

std::vector<std::size_t> refine_candidates(std::size_t instance,
                                           const std::vector<std::size_t>& candidates,
                                           const numkit::Mat& similarity,
                                           const std::vector<std::size_t>& scene_of) {
  check_square(similarity, "similarity");
  if (instance >= similarity.rows) {
    throw Error(Errc::index_out_of_range, "refine: instance out of range");
  }
  if (scene_of.size() != similarity.rows) {
    throw Error(Errc::dim_mismatch, "refine: scene map does not cover all instances");
  }

  // Visit order: best match first, index as the tie-break.
  std::vector<std::size_t> order(candidates);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return similarity.at(instance, a) > similarity.at(instance, b);
  });

  std::vector<std::size_t> blocked_scenes{scene_of[instance]};
  const auto blocked = [&](std::size_t scene) {
    return std::find(blocked_scenes.begin(), blocked_scenes.end(), scene) !=
           blocked_scenes.end();
  };

  std::vector<std::size_t> accepted;
  for (std::size_t cand : order) {
    if (cand >= similarity.rows) {
      throw Error(Errc::index_out_of_range, "refine: candidate out of range");
    }
    if (cand == instance) continue;
    const std::size_t scene = scene_of[cand];
    if (blocked(scene)) continue;
    accepted.push_back(cand);
    blocked_scenes.push_back(scene);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

bool PseudoLabelSet::is_positive(std::size_t i, std::size_t j) const {
  if (i >= positives.size()) {
    throw Error(Errc::index_out_of_range, "label set: instance out of range");
  }
  return std::binary_search(positives[i].begin(), positives[i].end(), j);
}

PseudoLabelSet build_label_sets(const numkit::Mat& similarity,
                                const std::vector<std::size_t>& scene_of,
                                double threshold) {
  const auto candidates = binarize(similarity, threshold);
  PseudoLabelSet out;
  out.positives.resize(similarity.rows);
  for (std::size_t i = 0; i < similarity.rows; ++i) {
    std::vector<std::size_t> kept =
        refine_candidates(i, candidates[i], similarity, scene_of);
    kept.insert(std::lower_bound(kept.begin(), kept.end(), i), i);
    out.positives[i] = std::move(kept);
  }
  return out;
}

void validate(const DbscanConfig& config) {
  if (!(config.eps >= 0.0) || !std::isfinite(config.eps)) {
    throw Error(Errc::invalid_config, "dbscan eps must be finite and non-negative");
  }
  if (config.min_pts == 0) {
    throw Error(Errc::invalid_config, "dbscan min_pts must be at least 1");
  }
}

namespace {

constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();
constexpr std::size_t kNoise = kUnassigned - 1;

std::vector<std::size_t> neighbours(const numkit::Mat& distances, std::size_t i,
                                    double eps) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < distances.cols; ++j) {
    if (distances.at(i, j) <= eps) {
      out.push_back(j);
    }
  }
  return out;
}

}  // namespace

ClusterAssignment dbscan_from_distances(const numkit::Mat& distances,
                                        const DbscanConfig& config) {
  check_square(distances, "distance");
  validate(config);
  const std::size_t n = distances.rows;

  ClusterAssignment out;
  out.cluster_of.assign(n, kUnassigned);
  out.is_noise.assign(n, 0);

  std::size_t next_id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.cluster_of[i] != kUnassigned) continue;
    std::vector<std::size_t> seed = neighbours(distances, i, config.eps);
    if (seed.size() < config.min_pts) {
      out.cluster_of[i] = kNoise;
      continue;
    }
    const std::size_t cid = next_id++;
    out.cluster_of[i] = cid;
    std::deque<std::size_t> queue(seed.begin(), seed.end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (out.cluster_of[q] == kNoise) {
        out.cluster_of[q] = cid;  // border point reclaimed from noise
        continue;
      }
      if (out.cluster_of[q] != kUnassigned) continue;
      out.cluster_of[q] = cid;
      std::vector<std::size_t> reach = neighbours(distances, q, config.eps);
      if (reach.size() >= config.min_pts) {
        queue.insert(queue.end(), reach.begin(), reach.end());
      }
    }
  }

  // Leftover noise points become their own one-member clusters so that every
  // instance belongs somewhere.
  for (std::size_t i = 0; i < n; ++i) {
    if (out.cluster_of[i] == kNoise) {
      out.is_noise[i] = 1;
      out.cluster_of[i] = next_id++;
    }
  }
  out.num_clusters = next_id;
  return out;
}

ClusterAssignment dbscan(const numkit::Mat& rows, const DbscanConfig& config) {
  numkit::Mat dist = numkit::gram(rows);
  for (double& v : dist.data) {
    v = 1.0 - v;
  }
  return dbscan_from_distances(dist, config);
}

void write_label_dump_header(std::ostream& out) {
  out << "epoch,instance,positives,cluster_id\n";
}

void append_label_dump(std::ostream& out, std::size_t epoch, const PseudoLabelSet& labels,
                       const ClusterAssignment& clusters) {
  if (labels.size() != clusters.size()) {
    throw Error(Errc::dim_mismatch, "label dump: labels and clusters disagree on size");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << epoch << ',' << i << ',';
    const auto& pos = labels.positives[i];
    for (std::size_t k = 0; k < pos.size(); ++k) {
      if (k > 0) out << ';';
      out << pos[k];
    }
    out << ',' << clusters.cluster_of[i] << '\n';
  }
}

}  // namespace siml::labeler
