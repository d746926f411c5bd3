#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "siml/labeler.hpp"
#include "siml/numkit.hpp"

namespace siml::evalkit {

/// Pair-level agreement between a predicted grouping and ground-truth
/// identities.  A pair (i, j), i < j, counts as predicted when the grouping
/// puts the two instances together; it counts as true when they share an
/// identity.  Self-pairs never count.
struct PairQuality {
  double precision = 1.0;  // defined as 1 when nothing was predicted
  double recall = 1.0;     // defined as 1 when there is nothing to find
  std::size_t predicted_pairs = 0;
  std::size_t true_pairs = 0;
  std::size_t correct_pairs = 0;
  bool no_predicted_pairs = false;
};

/// Positive-set quality.  The pair (i, j) is predicted when either side lists
/// the other as a positive.
PairQuality label_quality(const labeler::PseudoLabelSet& labels,
                          const std::vector<int>& identity_of);

/// Cluster quality: predicted pairs share a cluster id.
PairQuality cluster_quality(const labeler::ClusterAssignment& clusters,
                            const std::vector<int>& identity_of);

/// Mean of precision-at-hit over the ranked relevance flags, i.e. the usual
/// single-query average precision.  Throws when no flag is set.
double average_precision(const std::vector<unsigned char>& ranked_relevance);

struct RetrievalReport {
  double map = 0.0;
  double top1 = 0.0;
  std::vector<double> per_query_ap;
  std::size_t num_queries = 0;
  std::size_t num_gallery = 0;
};

/// Rank `gallery` rows against each query row by descending dot product (ties
/// keep gallery order) and score identity agreement.  Every query must have at
/// least one matching gallery instance.
RetrievalReport retrieval(const numkit::Mat& features,
                          const std::vector<std::size_t>& queries,
                          const std::vector<std::size_t>& gallery,
                          const std::vector<int>& identity_of);

/// metrics.csv: one row per finished epoch.
struct MetricsRow {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_sl = 0.0;
  double loss_dml = 0.0;
  double loss_cluster = 0.0;
  double label_precision = 0.0;
  double label_recall = 0.0;
  double map = 0.0;
  double top1 = 0.0;
  double threshold = 0.0;
};

void write_metrics_header(std::ostream& out);
void append_metrics_row(std::ostream& out, const MetricsRow& row);
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

/// quality.csv: positive-set quality vs cluster quality per epoch, for
/// comparing the two grouping signals over training.
struct QualityRow {
  std::size_t epoch = 0;
  double dml_precision = 0.0;
  double dml_recall = 0.0;
  double cluster_precision = 0.0;
  double cluster_recall = 0.0;
  // flags the no-predicted-pairs convention (precision forced to 1)
  bool dml_no_pairs = false;
  bool cluster_no_pairs = false;
};

void write_quality_header(std::ostream& out);
void append_quality_row(std::ostream& out, const QualityRow& row);
std::vector<QualityRow> read_quality_csv(std::istream& in);

/// Embedding exchange format: header `instance_id,scene_id[,gt_id],f_0..f_{d-1}`,
/// instance_id must equal the 0-based row ordinal.  Features are renormalized
/// on ingest.
struct EmbeddingTable {
  std::vector<std::size_t> scene_ids;  // parallel to feature rows
  std::vector<int> gt_ids;             // filled only when has_gt
  bool has_gt = false;
  numkit::Mat features;                // unit-norm rows
};

EmbeddingTable read_embeddings_csv(std::istream& in);
void write_embeddings_header(std::ostream& out, std::size_t dim, bool with_gt);
void append_embedding_row(std::ostream& out, std::size_t instance, std::size_t scene,
                          const int* gt, std::span<const double> feature);

/// Deterministic standalone SVG line chart; same inputs give identical bytes.
struct Series {
  std::string name;
  std::vector<double> values;
};

std::string render_line_chart(const std::string& title, const std::vector<double>& x,
                              const std::vector<Series>& series);

/// Write losses.svg, labels.svg, retrieval.svg, threshold.svg and quality.svg
/// under `dir`.  Both row sets must be non-empty.
void emit_plots(const std::vector<MetricsRow>& rows,
                const std::vector<QualityRow>& quality,
                const std::filesystem::path& dir);

}  // namespace siml::evalkit
