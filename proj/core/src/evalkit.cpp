#include "siml/evalkit.hpp"

#include <algorithm>
#include <map>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "siml/error.hpp"

namespace siml::evalkit {

namespace {

std::size_t pairs_among(std::size_t n) { return n * (n - 1) / 2; }

std::size_t true_pair_count(const std::vector<int>& identity_of) {
  std::map<int, std::size_t> sizes;
  for (int id : identity_of) ++sizes[id];
  std::size_t acc = 0;
  for (const auto& [id, n] : sizes) acc += pairs_among(n);
  return acc;
}

PairQuality finish_quality(PairQuality q) {
  if (q.predicted_pairs == 0) {
    q.no_predicted_pairs = true;
    q.precision = 1.0;
  } else {
    q.precision = static_cast<double>(q.correct_pairs) /
                  static_cast<double>(q.predicted_pairs);
  }
  q.recall = q.true_pairs == 0 ? 1.0
                               : static_cast<double>(q.correct_pairs) /
                                     static_cast<double>(q.true_pairs);
  return q;
}

}  // namespace

PairQuality label_quality(const labeler::PseudoLabelSet& labels,
                          const std::vector<int>& identity_of) {
  if (identity_of.size() != labels.size()) {
    throw Error(Errc::dim_mismatch, "identity map does not cover all instances");
  }
  // The pair (i, j) counts once even when only one side listed the other.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j : labels.positives[i]) {
      if (j == i) continue;
      pairs.push_back(std::minmax(i, j));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  PairQuality q;
  q.predicted_pairs = pairs.size();
  for (const auto& [i, j] : pairs) {
    q.correct_pairs += identity_of[i] == identity_of[j];
  }
  q.true_pairs = true_pair_count(identity_of);
  return finish_quality(q);
}

PairQuality cluster_quality(const labeler::ClusterAssignment& clusters,
                            const std::vector<int>& identity_of) {
  if (identity_of.size() != clusters.size()) {
    throw Error(Errc::dim_mismatch, "identity map does not cover all instances");
  }
  std::map<std::size_t, std::size_t> cluster_sizes;
  std::map<std::pair<std::size_t, int>, std::size_t> agree_sizes;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    ++cluster_sizes[clusters.cluster_of[i]];
    ++agree_sizes[{clusters.cluster_of[i], identity_of[i]}];
  }
  PairQuality q;
  for (const auto& [c, n] : cluster_sizes) q.predicted_pairs += pairs_among(n);
  for (const auto& [key, n] : agree_sizes) q.correct_pairs += pairs_among(n);
  q.true_pairs = true_pair_count(identity_of);
  return finish_quality(q);
}

double average_precision(const std::vector<unsigned char>& ranked_relevance) {
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (ranked_relevance[k]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits == 0) {
    throw Error(Errc::query_without_match, "ranking holds no relevant item");
  }
  return acc / static_cast<double>(hits);
}

RetrievalReport retrieval(const numkit::Mat& features,
                          const std::vector<std::size_t>& queries,
                          const std::vector<std::size_t>& gallery,
                          const std::vector<int>& identity_of) {
  if (identity_of.size() != features.rows) {
    throw Error(Errc::dim_mismatch, "identity map does not cover the feature rows");
  }
  if (queries.empty() || gallery.empty()) {
    throw Error(Errc::empty_batch, "retrieval needs queries and a gallery");
  }
  for (std::size_t idx : queries) {
    if (idx >= features.rows) {
      throw Error(Errc::index_out_of_range, "query index out of range");
    }
  }
  for (std::size_t idx : gallery) {
    if (idx >= features.rows) {
      throw Error(Errc::index_out_of_range, "gallery index out of range");
    }
  }

  RetrievalReport report;
  report.per_query_ap.reserve(queries.size());
  double ap_sum = 0.0;
  std::size_t top1_hits = 0;
  std::vector<double> scores;
  std::vector<std::size_t> kept;
  for (std::size_t q : queries) {
    scores.clear();
    kept.clear();
    for (std::size_t g : gallery) {
      if (g == q) continue;  // self-matches are never scored
      scores.push_back(numkit::dot(features.row_span(q), features.row_span(g)));
      kept.push_back(g);
    }
    if (kept.empty()) {
      throw Error(Errc::query_without_match, "gallery holds only the query itself");
    }
    const std::vector<std::size_t> order = numkit::argsort_desc(scores);
    std::vector<unsigned char> relevance(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      relevance[r] = identity_of[kept[order[r]]] == identity_of[q] ? 1 : 0;
    }
    const double ap = average_precision(relevance);
    report.per_query_ap.push_back(ap);
    ap_sum += ap;
    top1_hits += relevance.front();
  }
  report.num_queries = queries.size();
  report.num_gallery = gallery.size();
  report.map = ap_sum / static_cast<double>(queries.size());
  report.top1 = static_cast<double>(top1_hits) / static_cast<double>(queries.size());
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt_exact(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

double parse_double(const std::string& token, std::size_t line_no) {
  double value = 0.0;
  const char* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(Errc::malformed_csv,
                "line " + std::to_string(line_no) + ": bad number '" + token + "'");
  }
  return value;
}

std::size_t parse_size(const std::string& token, std::size_t line_no) {
  std::size_t value = 0;
  const char* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(Errc::malformed_csv,
                "line " + std::to_string(line_no) + ": bad index '" + token + "'");
  }
  return value;
}

int parse_int(const std::string& token, std::size_t line_no) {
  int value = 0;
  const char* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(Errc::malformed_csv,
                "line " + std::to_string(line_no) + ": bad integer '" + token + "'");
  }
  return value;
}

const char* kMetricsHeader =
    "epoch,loss_total,loss_sl,loss_dml,loss_cluster,label_precision,label_recall,"
    "map,top1,threshold";
const char* kQualityHeader =
    "epoch,dml_precision,dml_recall,cluster_precision,cluster_recall,"
    "dml_no_pairs,cluster_no_pairs";

}  // namespace

void write_metrics_header(std::ostream& out) { out << kMetricsHeader << '\n'; }

void append_metrics_row(std::ostream& out, const MetricsRow& row) {
  out << row.epoch << ',' << fmt(row.loss_total) << ',' << fmt(row.loss_sl) << ','
      << fmt(row.loss_dml) << ',' << fmt(row.loss_cluster) << ','
      << fmt(row.label_precision) << ',' << fmt(row.label_recall) << ','
      << fmt(row.map) << ',' << fmt(row.top1) << ',' << fmt(row.threshold) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!next_line(in, line) || line != kMetricsHeader) {
    throw Error(Errc::malformed_csv, "missing or wrong metrics header");
  }
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != 10) {
      throw Error(Errc::malformed_csv,
                  "line " + std::to_string(line_no) + ": expected 10 fields");
    }
    MetricsRow row;
    row.epoch = parse_size(fields[0], line_no);
    row.loss_total = parse_double(fields[1], line_no);
    row.loss_sl = parse_double(fields[2], line_no);
    row.loss_dml = parse_double(fields[3], line_no);
    row.loss_cluster = parse_double(fields[4], line_no);
    row.label_precision = parse_double(fields[5], line_no);
    row.label_recall = parse_double(fields[6], line_no);
    row.map = parse_double(fields[7], line_no);
    row.top1 = parse_double(fields[8], line_no);
    row.threshold = parse_double(fields[9], line_no);
    rows.push_back(row);
  }
  return rows;
}

void write_quality_header(std::ostream& out) { out << kQualityHeader << '\n'; }

void append_quality_row(std::ostream& out, const QualityRow& row) {
  out << row.epoch << ',' << fmt(row.dml_precision) << ',' << fmt(row.dml_recall) << ','
      << fmt(row.cluster_precision) << ',' << fmt(row.cluster_recall) << ','
      << (row.dml_no_pairs ? 1 : 0) << ',' << (row.cluster_no_pairs ? 1 : 0) << '\n';
}

std::vector<QualityRow> read_quality_csv(std::istream& in) {
  std::string line;
  if (!next_line(in, line) || line != kQualityHeader) {
    throw Error(Errc::malformed_csv, "missing or wrong quality header");
  }
  std::vector<QualityRow> rows;
  std::size_t line_no = 1;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != 7) {
      throw Error(Errc::malformed_csv,
                  "line " + std::to_string(line_no) + ": expected 7 fields");
    }
    QualityRow row;
    row.epoch = parse_size(fields[0], line_no);
    row.dml_precision = parse_double(fields[1], line_no);
    row.dml_recall = parse_double(fields[2], line_no);
    row.cluster_precision = parse_double(fields[3], line_no);
    row.cluster_recall = parse_double(fields[4], line_no);
    const std::size_t dml_flag = parse_size(fields[5], line_no);
    const std::size_t cluster_flag = parse_size(fields[6], line_no);
    if (dml_flag > 1 || cluster_flag > 1) {
      throw Error(Errc::malformed_csv,
                  "line " + std::to_string(line_no) + ": flag columns must be 0 or 1");
    }
    row.dml_no_pairs = dml_flag == 1;
    row.cluster_no_pairs = cluster_flag == 1;
    rows.push_back(row);
  }
  return rows;
}

EmbeddingTable read_embeddings_csv(std::istream& in) {
  std::string line;
  if (!next_line(in, line)) {
    throw Error(Errc::malformed_csv, "embeddings file is empty");
  }
  const auto header = split_line(line);
  if (header.size() < 3 || header[0] != "instance_id" || header[1] != "scene_id") {
    throw Error(Errc::malformed_csv, "embeddings header must start instance_id,scene_id");
  }
  std::size_t feature_start = 2;
  EmbeddingTable table;
  if (header[2] == "gt_id") {
    table.has_gt = true;
    feature_start = 3;
  }
  const std::size_t dim = header.size() - feature_start;
  if (dim == 0) {
    throw Error(Errc::malformed_csv, "embeddings header has no feature columns");
  }
  for (std::size_t k = 0; k < dim; ++k) {
    if (header[feature_start + k] != "f_" + std::to_string(k)) {
      throw Error(Errc::malformed_csv, "feature columns must be f_0..f_" +
                                           std::to_string(dim - 1) + " in order");
    }
  }

  std::vector<numkit::Vec> rows;
  std::size_t line_no = 1;
  while (next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size()) {
      // a row-level width disagreement is a dimension problem, distinct from a
      // bad header
      throw Error(Errc::dim_mismatch, "line " + std::to_string(line_no) +
                                          ": field count differs from header");
    }
    const std::size_t instance = parse_size(fields[0], line_no);
    if (instance != rows.size()) {
      throw Error(Errc::malformed_csv,
                  "line " + std::to_string(line_no) + ": instance_id must equal row order (" +
                      std::to_string(rows.size()) + ")");
    }
    table.scene_ids.push_back(parse_size(fields[1], line_no));
    if (table.has_gt) {
      table.gt_ids.push_back(parse_int(fields[2], line_no));
    }
    numkit::Vec feature(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      feature[k] = parse_double(fields[feature_start + k], line_no);
    }
    if (numkit::norm(feature) < numkit::kNormEps) {
      throw Error(Errc::malformed_csv,
                  "line " + std::to_string(line_no) + ": zero feature row");
    }
    rows.push_back(std::move(feature));
  }
  if (rows.empty()) {
    throw Error(Errc::malformed_csv, "embeddings file has no data rows");
  }

  table.features = numkit::Mat(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    numkit::l2_normalize_inplace(rows[i]);
    std::copy(rows[i].begin(), rows[i].end(), table.features.row(i));
  }
  return table;
}

void write_embeddings_header(std::ostream& out, std::size_t dim, bool with_gt) {
  out << "instance_id,scene_id";
  if (with_gt) out << ",gt_id";
  for (std::size_t k = 0; k < dim; ++k) {
    out << ",f_" << k;
  }
  out << '\n';
}

void append_embedding_row(std::ostream& out, std::size_t instance, std::size_t scene,
                          const int* gt, std::span<const double> feature) {
  out << instance << ',' << scene;
  if (gt != nullptr) out << ',' << *gt;
  for (double v : feature) {
    out << ',' << fmt_exact(v);
  }
  out << '\n';
}

namespace {

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

}  // namespace

std::string render_line_chart(const std::string& title, const std::vector<double>& x,
                              const std::vector<Series>& series) {
  for (const Series& s : series) {
    if (s.values.size() != x.size()) {
      throw Error(Errc::dim_mismatch, "series '" + s.name + "' length differs from x");
    }
  }
  constexpr double kW = 640, kH = 400;
  constexpr double kLeft = 64, kRight = 16, kTop = 34, kBottom = 40;

  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  if (!x.empty()) {
    xmin = *std::min_element(x.begin(), x.end());
    xmax = *std::max_element(x.begin(), x.end());
    ymin = std::numeric_limits<double>::infinity();
    ymax = -ymin;
    for (const Series& s : series) {
      for (double v : s.values) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    }
    if (!std::isfinite(ymin)) {
      ymin = 0.0;
      ymax = 1.0;
    }
  }
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  const double ypad = std::max((ymax - ymin) * 0.05, 1e-3);
  ymin -= ypad;
  ymax += ypad;

  const auto map_x = [&](double v) {
    return kLeft + (v - xmin) / (xmax - xmin) * (kW - kLeft - kRight);
  };
  const auto map_y = [&](double v) {
    return kH - kBottom - (v - ymin) / (ymax - ymin) * (kH - kTop - kBottom);
  };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + px(kLeft) + "\" y=\"20\" font-family=\"monospace\" "
         "font-size=\"14\">" + xml_escape(title) + "</text>\n";

  // frame and ticks
  for (int t = 0; t <= 4; ++t) {
    const double v = ymin + (ymax - ymin) * t / 4.0;
    const double y = map_y(v);
    svg += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(y) + "\" x2=\"" +
           px(kW - kRight) + "\" y2=\"" + px(y) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + px(kLeft - 6) + "\" y=\"" + px(y + 4) +
           "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">" +
           fmt(std::round(v * 1e4) / 1e4) + "</text>\n";
  }
  for (int t = 0; t <= 5; ++t) {
    const double v = xmin + (xmax - xmin) * t / 5.0;
    const double xp = map_x(v);
    svg += "<line x1=\"" + px(xp) + "\" y1=\"" + px(kH - kBottom) + "\" x2=\"" + px(xp) +
           "\" y2=\"" + px(kH - kBottom + 4) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + px(xp) + "\" y=\"" + px(kH - kBottom + 18) +
           "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">" +
           fmt(std::round(v * 100) / 100) + "</text>\n";
  }
  svg += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(kTop) + "\" x2=\"" + px(kLeft) +
         "\" y2=\"" + px(kH - kBottom) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(kH - kBottom) + "\" x2=\"" +
         px(kW - kRight) + "\" y2=\"" + px(kH - kBottom) +
         "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (!x.empty()) {
      std::string points;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (i > 0) points += ' ';
        points += px(map_x(x[i])) + "," + px(map_y(series[s].values[i]));
      }
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    }
    const double ly = kTop + 14.0 * static_cast<double>(s) + 10.0;
    svg += "<text x=\"" + px(kW - kRight - 150) + "\" y=\"" + px(ly) +
           "\" font-family=\"monospace\" font-size=\"11\" fill=\"" + color + "\">" +
           xml_escape(series[s].name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

namespace {

void write_chart(const std::filesystem::path& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  }
  out << svg;
  if (!out) {
    throw Error(Errc::io_failure, "failed writing " + path.string());
  }
}

}  // namespace

void emit_plots(const std::vector<MetricsRow>& rows,
                const std::vector<QualityRow>& quality,
                const std::filesystem::path& dir) {
  if (rows.empty() || quality.empty()) {
    throw Error(Errc::malformed_csv, "metrics input has no data rows to plot");
  }
  std::vector<double> epochs;
  epochs.reserve(rows.size());
  for (const MetricsRow& r : rows) {
    epochs.push_back(static_cast<double>(r.epoch));
  }
  const auto column = [&](double MetricsRow::*member) {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const MetricsRow& r : rows) {
      v.push_back(r.*member);
    }
    return v;
  };

  write_chart(dir / "losses.svg",
              render_line_chart("training losses", epochs,
                                {{"loss_total", column(&MetricsRow::loss_total)},
                                 {"loss_sl", column(&MetricsRow::loss_sl)},
                                 {"loss_dml", column(&MetricsRow::loss_dml)},
                                 {"loss_cluster", column(&MetricsRow::loss_cluster)}}));
  write_chart(dir / "labels.svg",
              render_line_chart("pseudo-label quality", epochs,
                                {{"label_precision", column(&MetricsRow::label_precision)},
                                 {"label_recall", column(&MetricsRow::label_recall)}}));
  write_chart(dir / "retrieval.svg",
              render_line_chart("retrieval metrics", epochs,
                                {{"map", column(&MetricsRow::map)},
                                 {"top1", column(&MetricsRow::top1)}}));
  write_chart(dir / "threshold.svg",
              render_line_chart("labeling threshold", epochs,
                                {{"threshold", column(&MetricsRow::threshold)}}));

  std::vector<double> qepochs;
  qepochs.reserve(quality.size());
  for (const QualityRow& r : quality) {
    qepochs.push_back(static_cast<double>(r.epoch));
  }
  const auto qcolumn = [&](double QualityRow::*member) {
    std::vector<double> v;
    v.reserve(quality.size());
    for (const QualityRow& r : quality) {
      v.push_back(r.*member);
    }
    return v;
  };
  write_chart(dir / "quality.svg",
              render_line_chart(
                  "positive-set vs cluster label quality", qepochs,
                  {{"dml_precision", qcolumn(&QualityRow::dml_precision)},
                   {"dml_recall", qcolumn(&QualityRow::dml_recall)},
                   {"cluster_precision", qcolumn(&QualityRow::cluster_precision)},
                   {"cluster_recall", qcolumn(&QualityRow::cluster_recall)}}));
}

}  // namespace siml::evalkit
