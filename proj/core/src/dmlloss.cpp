#include "siml/dmlloss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "siml/error.hpp"

namespace siml::dmlloss {

void validate(const DmlConfig& config) {
  if (!(config.delta >= 0.0) || !std::isfinite(config.delta)) {
    throw Error(Errc::invalid_config, "dml delta must be finite and non-negative");
  }
  if (!(config.tau > 0.0) || !std::isfinite(config.tau)) {
    throw Error(Errc::invalid_config, "dml tau must be finite and positive");
  }
}

MlResult ml_loss(const membank::MemoryBank& bank, const numkit::Vec& feature,
                 const labeler::PseudoLabelSet& labels, std::size_t index,
                 const DmlConfig& config) {
  validate(config);
  if (labels.size() != bank.size()) {
    throw Error(Errc::dim_mismatch, "label set does not cover the bank");
  }
  if (index >= bank.size()) {
    throw Error(Errc::index_out_of_range, "ml loss: instance out of range");
  }
  if (feature.size() != bank.dim()) {
    throw Error(Errc::dim_mismatch, "ml loss: feature dimension mismatch");
  }

  const auto& positives = labels.positives[index];
  const std::size_t num_pos = positives.size();
  const std::size_t num_neg = bank.size() - num_pos;
  if (num_pos == 0) {
    throw Error(Errc::invalid_config, "ml loss: empty positive set (self missing)");
  }

  MlResult result;
  result.d_feature.assign(feature.size(), 0.0);
  const double pos_w = config.delta / static_cast<double>(num_pos);
  const double neg_w = num_neg > 0 ? 1.0 / static_cast<double>(num_neg) : 0.0;

  auto next_pos = positives.begin();
  for (std::size_t j = 0; j < bank.size(); ++j) {
    bool is_pos = false;
    if (next_pos != positives.end() && *next_pos == j) {
      is_pos = true;
      ++next_pos;
    }
    const numkit::Vec& row = bank.row(j);
    const double score = numkit::dot(row, feature);
    const double resid = is_pos ? score - 1.0 : score + 1.0;
    const double w = is_pos ? pos_w : neg_w;
    result.value += w * resid * resid;
    const double coeff = 2.0 * w * resid;
    for (std::size_t k = 0; k < feature.size(); ++k) {
      result.d_feature[k] += coeff * row[k];
    }
  }
  return result;
}

DmlResult dml_total(const membank::MemoryBank& instance_bank,
                    const membank::MemoryBank& holistic_bank,
                    const numkit::Vec& instance_feature,
                    const numkit::Vec& holistic_feature,
                    const labeler::PseudoLabelSet& labels, std::size_t index,
                    const DmlConfig& config) {
  MlResult inst = ml_loss(instance_bank, instance_feature, labels, index, config);
  MlResult holo = ml_loss(holistic_bank, holistic_feature, labels, index, config);
  DmlResult result;
  result.value = inst.value + holo.value;
  result.d_instance_feature = std::move(inst.d_feature);
  result.d_holistic_feature = std::move(holo.d_feature);
  return result;
}

ClusterCentroids compute_centroids(const numkit::Mat& fused,
                                   const labeler::ClusterAssignment& clusters) {
  if (clusters.size() != fused.rows) {
    throw Error(Errc::dim_mismatch, "cluster assignment does not cover the rows");
  }
  if (clusters.num_clusters == 0) {
    throw Error(Errc::empty_batch, "no clusters to take centroids of");
  }

  ClusterCentroids out;
  out.rows = numkit::Mat(clusters.num_clusters, fused.cols);
  std::vector<std::size_t> counts(clusters.num_clusters, 0);
  std::vector<std::size_t> first_member(clusters.num_clusters, fused.rows);
  for (std::size_t i = 0; i < fused.rows; ++i) {
    const std::size_t c = clusters.cluster_of[i];
    if (c >= clusters.num_clusters) {
      throw Error(Errc::index_out_of_range, "cluster id " + std::to_string(c) +
                                                " exceeds cluster count");
    }
    auto dst = out.rows.row(c);
    const auto src = fused.row_span(i);
    for (std::size_t k = 0; k < fused.cols; ++k) {
      dst[k] += src[k];
    }
    ++counts[c];
    first_member[c] = std::min(first_member[c], i);
  }

  for (std::size_t c = 0; c < clusters.num_clusters; ++c) {
    if (counts[c] == 0) {
      throw Error(Errc::empty_batch, "cluster " + std::to_string(c) + " has no members");
    }
    std::span<double> row{out.rows.row(c), out.rows.cols};
    const double inv = 1.0 / static_cast<double>(counts[c]);
    for (double& v : row) {
      v *= inv;
    }
    if (numkit::norm(row) < numkit::kNormEps) {
      const auto fallback = fused.row_span(first_member[c]);
      std::copy(fallback.begin(), fallback.end(), row.begin());
    } else {
      numkit::l2_normalize_inplace(row);
    }
  }
  return out;
}

ClusterLossResult cluster_loss(const ClusterCentroids& centroids,
                               const numkit::Vec& feature, std::size_t cluster_id,
                               const DmlConfig& config) {
  validate(config);
  const numkit::Mat& rows = centroids.rows;
  if (rows.rows == 0) {
    throw Error(Errc::empty_batch, "cluster loss: no centroids");
  }
  if (cluster_id >= rows.rows) {
    throw Error(Errc::index_out_of_range, "cluster loss: cluster id out of range");
  }
  if (feature.size() != rows.cols) {
    throw Error(Errc::dim_mismatch, "cluster loss: feature dimension mismatch");
  }

  std::vector<double> logits(rows.rows);
  for (std::size_t c = 0; c < rows.rows; ++c) {
    logits[c] = numkit::dot(rows.row_span(c), feature) / config.tau;
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> shifted_exp(rows.rows);
  double sum_exp = 0.0;
  for (std::size_t c = 0; c < rows.rows; ++c) {
    shifted_exp[c] = std::exp(logits[c] - peak);
    sum_exp += shifted_exp[c];
  }

  ClusterLossResult result;
  result.value = peak + std::log(sum_exp) - logits[cluster_id];
  result.d_feature.assign(feature.size(), 0.0);
  for (std::size_t c = 0; c < rows.rows; ++c) {
    const double prob = shifted_exp[c] / sum_exp;
    const double coeff = (prob - (c == cluster_id ? 1.0 : 0.0)) / config.tau;
    const auto row = rows.row_span(c);
    for (std::size_t k = 0; k < feature.size(); ++k) {
      result.d_feature[k] += coeff * row[k];
    }
  }
  return result;
}

}  // namespace siml::dmlloss
