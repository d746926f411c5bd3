#pragma once

#include <cstddef>

#include "siml/labeler.hpp"
#include "siml/membank.hpp"
#include "siml/numkit.hpp"

namespace siml::dmlloss {

struct DmlConfig {
  double delta = 1.0;  // weight on the positive pull term
  double tau = 0.05;   // softmax temperature for the cluster term
};

void validate(const DmlConfig& config);

/// Multi-label regression of bank scores against +1 / -1 targets:
///
///   delta / |P| * sum_{p in P} (s_p - 1)^2  +  1 / |N| * sum_{v in N} (s_v + 1)^2
///
/// where s_x is the dot product of bank row x with `feature`, P is the
/// positive set of `index` (always holds `index` itself) and N is everything
/// else.  Bank rows are treated as constants: only d_feature comes back.
struct MlResult {
  double value = 0.0;
  numkit::Vec d_feature;
};

MlResult ml_loss(const membank::MemoryBank& bank, const numkit::Vec& feature,
                 const labeler::PseudoLabelSet& labels, std::size_t index,
                 const DmlConfig& config);

/// The two-bank total: the instance-level feature scored against the instance
/// bank plus the holistic feature scored against the holistic bank.
struct DmlResult {
  double value = 0.0;
  numkit::Vec d_instance_feature;
  numkit::Vec d_holistic_feature;
};

DmlResult dml_total(const membank::MemoryBank& instance_bank,
                    const membank::MemoryBank& holistic_bank,
                    const numkit::Vec& instance_feature,
                    const numkit::Vec& holistic_feature,
                    const labeler::PseudoLabelSet& labels, std::size_t index,
                    const DmlConfig& config);

/// Unit-norm mean of the fused bank rows belonging to each cluster.  A cluster
/// whose member rows cancel to (near) zero falls back to its lowest-index
/// member's row.
struct ClusterCentroids {
  numkit::Mat rows;
};

ClusterCentroids compute_centroids(const numkit::Mat& fused,
                                   const labeler::ClusterAssignment& clusters);

/// Softmax cross-entropy over centroid scores at temperature tau, with the
/// instance's own cluster as the target.  Centroids are constants.
struct ClusterLossResult {
  double value = 0.0;
  numkit::Vec d_feature;
};

ClusterLossResult cluster_loss(const ClusterCentroids& centroids,
                               const numkit::Vec& feature, std::size_t cluster_id,
                               const DmlConfig& config);

}  // namespace siml::dmlloss
