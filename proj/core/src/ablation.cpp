#include "siml/ablation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "siml/error.hpp"

namespace siml::ablation {

namespace {

constexpr char kHeader[] = "arm,seed,map,top1,label_precision,label_recall";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

double parse_double(const std::string& field, std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw Error(Errc::malformed_csv,
                "line " + std::to_string(line) + ": bad number '" + field + "'");
  }
  return value;
}

std::uint64_t parse_seed(const std::string& field, std::size_t line) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw Error(Errc::malformed_csv,
                "line " + std::to_string(line) + ": bad seed '" + field + "'");
  }
  return value;
}

}  // namespace

std::vector<ArmSpec> loss_toggle_arms() {
  std::vector<ArmSpec> arms(4);
  arms[0].name = "baseline";
  arms[0].toggles = {false, false, true};
  arms[1].name = "baseline_ml";
  arms[1].toggles = {false, true, true};
  arms[2].name = "baseline_sl";
  arms[2].toggles = {true, false, true};
  arms[3].name = "full";
  arms[3].toggles = {true, true, true};
  return arms;
}

std::vector<ArmSpec> scale_arms() {
  std::vector<ArmSpec> arms(4);
  arms[0].name = "original_scale";
  arms[0].scale_mode = trainer::ScaleMode::original;
  arms[0].use_mask = false;
  arms[1].name = "one_scale";
  arms[1].scale_mode = trainer::ScaleMode::one;
  arms[1].use_mask = false;
  arms[2].name = "multi_scale";
  arms[2].scale_mode = trainer::ScaleMode::multi;
  arms[2].use_mask = false;
  arms[3].name = "multi_scale_mask";
  arms[3].scale_mode = trainer::ScaleMode::multi;
  arms[3].use_mask = true;
  return arms;
}

std::vector<ArmSpec> delta_arms() {
  std::vector<ArmSpec> arms;
  for (double d : {0.5, 1.0, 2.0, 5.0}) {
    ArmSpec arm;
    arm.name = "delta_" + fmt(d);
    arm.delta = d;
    arms.push_back(arm);
  }
  return arms;
}

std::vector<ArmResult> run_ablation(const synthdata::DatasetConfig& data_config,
                                    const trainer::TrainConfig& base,
                                    const std::vector<ArmSpec>& arms,
                                    const std::vector<std::uint64_t>& seeds,
                                    std::ostream* progress) {
  if (arms.size() < 2) {
    throw Error(Errc::invalid_config, "an ablation needs at least two arms");
  }
  if (seeds.size() < 3) {
    throw Error(Errc::invalid_config, "an ablation needs at least three seeds");
  }
  std::set<std::string> names;
  for (const ArmSpec& arm : arms) {
    if (arm.name.empty() || arm.name.find_first_of(",\n\r") != std::string::npos) {
      throw Error(Errc::invalid_config, "arm names must be non-empty and comma-free");
    }
    if (!names.insert(arm.name).second) {
      throw Error(Errc::invalid_config, "duplicate arm name '" + arm.name + "'");
    }
  }

  std::vector<ArmResult> rows;
  rows.reserve(arms.size() * seeds.size());
  for (std::uint64_t seed : seeds) {
    synthdata::DatasetConfig dc = data_config;
    dc.seed = seed;
    const synthdata::Dataset dataset = synthdata::generate_dataset(dc);
    for (const ArmSpec& arm : arms) {
      trainer::TrainConfig cfg = base;
      cfg.toggles = arm.toggles;
      cfg.scale_mode = arm.scale_mode;
      cfg.use_mask = arm.use_mask;
      if (arm.delta >= 0.0) {
        cfg.dml.delta = arm.delta;
      }
      if (cfg.scale_mode != trainer::ScaleMode::multi) {
        cfg.presets.clear();  // preset overrides only apply to the multi arm
      }
      cfg.seed = seed;

      trainer::RunOptions options;
      options.write_checkpoints = false;
      options.write_labels = false;
      options.write_plots = false;
      const trainer::RunResult result = trainer::run(dataset, cfg, options);

      ArmResult row;
      row.arm = arm.name;
      row.seed = seed;
      row.map = result.final_eval.map;
      row.top1 = result.final_eval.top1;
      row.label_precision = result.metrics.back().label_precision;
      row.label_recall = result.metrics.back().label_recall;
      rows.push_back(row);
      if (progress) {
        *progress << arm.name << " seed " << seed << "  map " << row.map << "  top1 "
                  << row.top1 << "\n";
        progress->flush();
      }
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<ArmResult>& rows) {
  out << kHeader << '\n';
  for (const ArmResult& row : rows) {
    out << row.arm << ',' << row.seed << ',' << fmt(row.map) << ',' << fmt(row.top1) << ','
        << fmt(row.label_precision) << ',' << fmt(row.label_recall) << '\n';
  }
}

std::vector<ArmResult> read_ablation_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw Error(Errc::malformed_csv, "ablation csv is empty");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) {
    throw Error(Errc::malformed_csv, "ablation csv has the wrong header");
  }
  std::vector<ArmResult> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) {
      throw Error(Errc::malformed_csv,
                  "line " + std::to_string(line_no) + ": expected 6 fields, got " +
                      std::to_string(fields.size()));
    }
    ArmResult row;
    row.arm = fields[0];
    row.seed = parse_seed(fields[1], line_no);
    row.map = parse_double(fields[2], line_no);
    row.top1 = parse_double(fields[3], line_no);
    row.label_precision = parse_double(fields[4], line_no);
    row.label_recall = parse_double(fields[5], line_no);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ArmSummary> summarize(const std::vector<ArmResult>& rows) {
  std::vector<ArmSummary> out;
  auto slot = [&out](const std::string& name) -> ArmSummary& {
    for (ArmSummary& s : out) {
      if (s.arm == name) return s;
    }
    out.push_back({name, 0, 0.0, 0.0, 0.0, 0.0});
    return out.back();
  };
  for (const ArmResult& row : rows) {
    ArmSummary& s = slot(row.arm);
    s.runs += 1;
    s.mean_map += row.map;
    s.mean_top1 += row.top1;
  }
  for (ArmSummary& s : out) {
    s.mean_map /= static_cast<double>(s.runs);
    s.mean_top1 /= static_cast<double>(s.runs);
  }
  for (const ArmResult& row : rows) {
    ArmSummary& s = slot(row.arm);
    s.stddev_map += (row.map - s.mean_map) * (row.map - s.mean_map);
    s.stddev_top1 += (row.top1 - s.mean_top1) * (row.top1 - s.mean_top1);
  }
  for (ArmSummary& s : out) {
    const double denom = s.runs > 1 ? static_cast<double>(s.runs - 1) : 1.0;
    s.stddev_map = std::sqrt(s.stddev_map / denom);
    s.stddev_top1 = std::sqrt(s.stddev_top1 / denom);
  }
  return out;
}

}  // namespace siml::ablation
