// siml: dataset generation, training, pseudo-labeling and retrieval
// evaluation from the command line.  Exit codes: 0 ok, 2 bad config or
// schema, 3 I/O failure, 4 training failure, 5 dimension inconsistency,
// 6 checkpoint mismatch.
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "siml/ablation.hpp"
#include "siml/config.hpp"
#include "siml/dataset_io.hpp"
#include "siml/encoder.hpp"
#include "siml/error.hpp"
#include "siml/evalkit.hpp"
#include "siml/imageops.hpp"
#include "siml/labeler.hpp"
#include "siml/membank.hpp"
#include "siml/trainer.hpp"

namespace fs = std::filesystem;

namespace {

int exit_code_for(const siml::Error& error, bool during_training) {
  switch (error.code()) {
    case siml::Errc::invalid_config:
    case siml::Errc::malformed_csv:
      return 2;
    case siml::Errc::io_failure:
      return 3;
    case siml::Errc::dim_mismatch:
      return 5;
    case siml::Errc::checkpoint_mismatch:
      return 6;
    default:
      return during_training ? 4 : 1;
  }
}

int report_error(const siml::Error& error, bool during_training = false) {
  std::cerr << "siml: " << error.what() << "\n";
  return exit_code_for(error, during_training);
}

int cmd_gen(const std::string& config_path, const std::string& out_dir) {
  const siml::config::RunConfig cfg = siml::config::load_file(config_path);
  const siml::synthdata::Dataset dataset = siml::synthdata::generate_dataset(cfg.data);
  siml::dataset_io::save_dataset(dataset, out_dir);
  siml::config::write_resolved(fs::path(out_dir) / "resolved_config.json", cfg);
  std::cout << "wrote " << dataset.scenes.size() << " scenes / "
            << dataset.manifest.instance_count << " instances to " << out_dir << "\n";
  return 0;
}

std::vector<siml::ablation::ArmSpec> arms_by_name(const std::vector<std::string>& names) {
  using siml::ablation::ArmSpec;
  std::vector<ArmSpec> catalog = siml::ablation::loss_toggle_arms();
  for (auto& arm : siml::ablation::scale_arms()) catalog.push_back(arm);
  for (auto& arm : siml::ablation::delta_arms()) catalog.push_back(arm);

  std::vector<ArmSpec> picked;
  auto add_named = [&](const std::string& name) {
    for (const ArmSpec& arm : catalog) {
      if (arm.name == name) {
        picked.push_back(arm);
        return;
      }
    }
    std::string known;
    for (const ArmSpec& arm : catalog) {
      known += known.empty() ? arm.name : ", " + arm.name;
    }
    throw siml::Error(siml::Errc::invalid_config,
                      "unknown ablation arm '" + name + "' (known: losses, scales, delta, " +
                          known + ")");
  };
  for (const std::string& name : names) {
    if (name == "losses") {
      for (auto& arm : siml::ablation::loss_toggle_arms()) picked.push_back(arm);
    } else if (name == "scales") {
      for (auto& arm : siml::ablation::scale_arms()) picked.push_back(arm);
    } else if (name == "delta") {
      for (auto& arm : siml::ablation::delta_arms()) picked.push_back(arm);
    } else {
      add_named(name);
    }
  }
  return picked;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, int threads, bool threads_set,
              const std::vector<std::string>& ablate_arms,
              const std::vector<std::uint64_t>& seeds) {
  siml::config::RunConfig cfg = siml::config::load_file(config_path);
  if (threads_set) {
    cfg.train.threads = threads;
    siml::trainer::validate(cfg.train);
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw siml::Error(siml::Errc::io_failure, "cannot create " + out_dir + ": " + ec.message());
  }
  siml::config::write_resolved(fs::path(out_dir) / "resolved_config.json", cfg);

  if (!ablate_arms.empty()) {
    const std::vector<siml::ablation::ArmSpec> arms = arms_by_name(ablate_arms);
    std::vector<std::uint64_t> run_seeds = seeds;
    if (run_seeds.empty()) run_seeds = {1, 2, 3, 4, 5};
    std::vector<siml::ablation::ArmResult> rows;
    try {
      rows = siml::ablation::run_ablation(cfg.data, cfg.train, arms, run_seeds, &std::cout);
    } catch (const siml::Error& error) {
      if (error.code() == siml::Errc::invalid_config) throw;
      return report_error(error, /*during_training=*/true);
    }
    std::ofstream csv(fs::path(out_dir) / "ablation.csv", std::ios::binary);
    if (!csv) {
      throw siml::Error(siml::Errc::io_failure, "cannot open ablation.csv under " + out_dir);
    }
    siml::ablation::write_ablation_csv(csv, rows);
    for (const siml::ablation::ArmSummary& s : siml::ablation::summarize(rows)) {
      std::cout << s.arm << ": map " << s.mean_map << " +- " << s.stddev_map << ", top1 "
                << s.mean_top1 << " +- " << s.stddev_top1 << " (" << s.runs << " seeds)\n";
    }
    return 0;
  }

  const siml::synthdata::Dataset dataset = siml::dataset_io::load_dataset(data_dir);
  siml::trainer::RunOptions options;
  options.out_dir = out_dir;
  options.log = &std::cout;
  try {
    const siml::trainer::RunResult result = siml::trainer::run(dataset, cfg.train, options);
    std::cout << "final map " << result.final_eval.map << ", top1 " << result.final_eval.top1
              << "\n";
  } catch (const siml::Error& error) {
    return report_error(error, /*during_training=*/true);
  }
  return 0;
}

std::vector<std::size_t> read_scene_override(const std::string& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw siml::Error(siml::Errc::io_failure, "cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw siml::Error(siml::Errc::malformed_csv, path + " is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "instance_id,scene_id") {
    throw siml::Error(siml::Errc::malformed_csv,
                      path + ": expected header instance_id,scene_id");
  }
  std::vector<std::size_t> scene_of(count);
  std::vector<bool> seen(count, false);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw siml::Error(siml::Errc::malformed_csv,
                        path + " line " + std::to_string(line_no) + ": expected two fields");
    }
    std::size_t instance = 0, scene = 0;
    const char* b = line.data();
    auto r1 = std::from_chars(b, b + comma, instance);
    auto r2 = std::from_chars(b + comma + 1, b + line.size(), scene);
    if (r1.ec != std::errc{} || r1.ptr != b + comma || r2.ec != std::errc{} ||
        r2.ptr != b + line.size()) {
      throw siml::Error(siml::Errc::malformed_csv,
                        path + " line " + std::to_string(line_no) + ": bad number");
    }
    if (instance >= count) {
      throw siml::Error(siml::Errc::malformed_csv,
                        path + " line " + std::to_string(line_no) + ": instance out of range");
    }
    seen[instance] = true;
    scene_of[instance] = scene;
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!seen[i]) {
      throw siml::Error(siml::Errc::malformed_csv,
                        path + ": no scene for instance " + std::to_string(i));
    }
  }
  return scene_of;
}

int cmd_label(const std::string& embeddings_path, const std::string& scenes_path,
              const std::string& config_path, const std::string& out_path,
              std::size_t epoch) {
  siml::config::RunConfig cfg;
  if (!config_path.empty()) {
    cfg = siml::config::load_file(config_path);
  }
  std::ifstream in(embeddings_path, std::ios::binary);
  if (!in) {
    throw siml::Error(siml::Errc::io_failure, "cannot open " + embeddings_path);
  }
  const siml::evalkit::EmbeddingTable table = siml::evalkit::read_embeddings_csv(in);
  const std::size_t count = table.features.rows;
  const std::size_t dim = table.features.cols;

  std::vector<std::size_t> scene_of = table.scene_ids;
  if (!scenes_path.empty()) {
    scene_of = read_scene_override(scenes_path, count);
  }

  siml::membank::MemoryBank instance_bank(count, dim, cfg.train.bank_momentum,
                                          cfg.train.bank_renormalize);
  siml::membank::MemoryBank holistic_bank(count, dim, cfg.train.bank_momentum,
                                          cfg.train.bank_renormalize);
  for (std::size_t i = 0; i < count; ++i) {
    const siml::numkit::Vec row(table.features.row(i), table.features.row(i) + dim);
    instance_bank.update(i, row);
    holistic_bank.update(i, row);
  }
  const siml::numkit::Mat fused = siml::membank::fuse(instance_bank, holistic_bank);
  const siml::numkit::Mat sim = siml::membank::similarity(fused);
  const double threshold = siml::labeler::dynamic_threshold(cfg.train.threshold, epoch);
  const siml::labeler::PseudoLabelSet labels =
      siml::labeler::build_label_sets(sim, scene_of, threshold);
  siml::numkit::Mat distances = sim;
  for (double& v : distances.data) v = 1.0 - v;
  const siml::labeler::ClusterAssignment clusters =
      siml::labeler::dbscan_from_distances(distances, cfg.train.dbscan);

  const bool to_stdout = out_path.empty() || out_path == "-";
  std::ofstream file;
  if (!to_stdout) {
    file.open(out_path, std::ios::binary);
    if (!file) {
      throw siml::Error(siml::Errc::io_failure, "cannot open " + out_path);
    }
  }
  std::ostream& out = to_stdout ? std::cout : file;
  siml::labeler::write_label_dump_header(out);
  siml::labeler::append_label_dump(out, epoch, labels, clusters);
  if (!out) {
    throw siml::Error(siml::Errc::io_failure, "failed writing label dump");
  }

  if (table.has_gt) {
    const siml::evalkit::PairQuality lq = siml::evalkit::label_quality(labels, table.gt_ids);
    nlohmann::ordered_json quality{{"label_precision", lq.precision},
                                   {"label_recall", lq.recall},
                                   {"predicted_pairs", lq.predicted_pairs},
                                   {"true_pairs", lq.true_pairs},
                                   {"correct_pairs", lq.correct_pairs}};
    // keep the CSV stream clean when both share stdout
    (to_stdout ? std::cerr : std::cout) << quality.dump(2) << "\n";
  }
  return 0;
}

fs::path resolve_checkpoint_dir(const fs::path& given) {
  if (fs::exists(given / "meta.json")) {
    return given;
  }
  int epoch = siml::trainer::find_latest_checkpoint(given);
  if (epoch >= 0) {
    return given / ("epoch_" + std::to_string(epoch));
  }
  epoch = siml::trainer::find_latest_checkpoint(given / "ckpt");
  if (epoch >= 0) {
    return given / "ckpt" / ("epoch_" + std::to_string(epoch));
  }
  throw siml::Error(siml::Errc::io_failure,
                    "no complete checkpoint under " + given.string());
}

int cmd_eval(const std::string& ckpt_dir, const std::string& data_dir,
             const std::string& out_dir, double probe_fraction,
             const std::string& export_path) {
  const siml::synthdata::Dataset dataset = siml::dataset_io::load_dataset(data_dir);
  const fs::path epoch_dir = resolve_checkpoint_dir(ckpt_dir);

  const siml::encoder::Checkpoint ck =
      siml::encoder::load_checkpoint((epoch_dir / "encoder.bin").string());
  std::ifstream banks_in(epoch_dir / "banks.bin", std::ios::binary);
  if (!banks_in) {
    throw siml::Error(siml::Errc::io_failure,
                      "cannot open " + (epoch_dir / "banks.bin").string());
  }
  const siml::membank::BankPair banks = siml::membank::load_banks(banks_in);

  std::ifstream meta_in(epoch_dir / "meta.json", std::ios::binary);
  if (!meta_in) {
    throw siml::Error(siml::Errc::io_failure,
                      "cannot open " + (epoch_dir / "meta.json").string());
  }
  nlohmann::json meta = nlohmann::json::parse(meta_in, nullptr, false);
  if (meta.is_discarded() || meta.value("format", std::string()) != "siml.ckpt-meta" ||
      meta.value("version", 0) != 1) {
    throw siml::Error(siml::Errc::checkpoint_mismatch,
                      (epoch_dir / "meta.json").string() + " is not a checkpoint meta file");
  }
  if (banks.instance_bank.dim() != static_cast<std::size_t>(ck.params.dim)) {
    throw siml::Error(siml::Errc::checkpoint_mismatch,
                      "banks and encoder disagree on feature dimension");
  }
  const std::size_t count = dataset.manifest.instance_count;
  if (banks.instance_bank.size() != count) {
    throw siml::Error(siml::Errc::checkpoint_mismatch,
                      "checkpoint was trained on a different instance count");
  }

  // raw-crop feature per instance
  siml::numkit::Mat features(count, static_cast<std::size_t>(ck.params.dim));
  std::vector<std::size_t> scene_ids(count, 0);
  std::vector<bool> seen(count, false);
  for (const siml::synthdata::SceneRecord& scene : dataset.scenes) {
    for (const siml::synthdata::PersonGT& person : scene.persons) {
      const auto index = static_cast<std::size_t>(person.instance_index);
      const siml::Image crop = siml::imageops::crop(scene, person);
      const siml::encoder::ForwardTrace trace = siml::encoder::forward_pooled(
          ck.params, siml::encoder::grid_pool(crop, ck.params.grid_h, ck.params.grid_w));
      std::copy(trace.feature.begin(), trace.feature.end(), features.row(index));
      scene_ids[index] = static_cast<std::size_t>(scene.scene_id);
      seen[index] = true;
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!seen[i]) {
      throw siml::Error(siml::Errc::io_failure,
                        "dataset lacks instance " + std::to_string(i));
    }
  }

  const std::vector<int>& identity_of = dataset.manifest.eval_only.identity_of;
  const siml::trainer::ProbeSplit probe =
      siml::trainer::probe_split(identity_of, probe_fraction);
  const siml::evalkit::RetrievalReport report =
      siml::evalkit::retrieval(features, probe.queries, probe.gallery, identity_of);

  nlohmann::ordered_json doc{{"checkpoint", epoch_dir.string()},
                             {"epoch", ck.epoch},
                             {"dim", ck.params.dim},
                             {"num_queries", report.num_queries},
                             {"num_gallery", report.num_gallery},
                             {"map", report.map},
                             {"top1", report.top1}};
  std::cout << doc.dump(2) << "\n";

  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
      throw siml::Error(siml::Errc::io_failure,
                        "cannot create " + out_dir + ": " + ec.message());
    }
    std::ofstream rj(fs::path(out_dir) / "report.json", std::ios::binary);
    if (!rj) {
      throw siml::Error(siml::Errc::io_failure, "cannot open report.json under " + out_dir);
    }
    rj << doc.dump(2) << "\n";

    // replot the training curves when the run directory is nearby
    const fs::path run_dir = epoch_dir.parent_path().parent_path();
    std::ifstream metrics_in(run_dir / "metrics.csv", std::ios::binary);
    std::ifstream quality_in(run_dir / "quality.csv", std::ios::binary);
    if (metrics_in && quality_in) {
      const auto metrics = siml::evalkit::read_metrics_csv(metrics_in);
      const auto quality = siml::evalkit::read_quality_csv(quality_in);
      if (!metrics.empty() && !quality.empty()) {
        siml::evalkit::emit_plots(metrics, quality, out_dir);
      }
    }
  }

  if (!export_path.empty()) {
    std::ofstream ex(export_path, std::ios::binary);
    if (!ex) {
      throw siml::Error(siml::Errc::io_failure, "cannot open " + export_path);
    }
    siml::evalkit::write_embeddings_header(ex, features.cols, /*with_gt=*/true);
    for (std::size_t i = 0; i < count; ++i) {
      siml::evalkit::append_embedding_row(
          ex, i, scene_ids[i], &identity_of[i],
          std::span<const double>(features.row(i), features.cols));
    }
    if (!ex) {
      throw siml::Error(siml::Errc::io_failure, "failed writing " + export_path);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised person re-id toy pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir;
  int threads = 1;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "config JSON")->required();
  gen->add_option("--out", out_dir, "output directory")->required();

  std::vector<std::string> ablate_arms;
  std::vector<std::uint64_t> seeds;
  auto* train = app.add_subcommand("train", "train on a generated dataset");
  train->add_option("--config", config_path, "config JSON")->required();
  auto* train_data = train->add_option("--data", data_dir, "dataset directory");
  train->add_option("--out", out_dir, "run output directory")->required();
  auto* threads_opt = train->add_option("--threads", threads, "worker threads (default 1)");
  train->add_option("--ablate", ablate_arms,
                    "comma-separated arm names or groups (losses, scales, delta); "
                    "generates its own per-seed datasets")
      ->delimiter(',');
  train->add_option("--seeds", seeds, "ablation seeds (default 1..5)")->delimiter(',');

  std::string embeddings_path, scenes_path, label_out;
  std::size_t label_epoch = 0;
  auto* label = app.add_subcommand("label", "pseudo-label externally produced embeddings");
  label->add_option("--embeddings", embeddings_path,
                    "CSV instance_id,scene_id[,gt_id],f_0..f_{d-1}")
      ->required();
  label->add_option("--scenes", scenes_path, "optional instance_id,scene_id override CSV");
  label->add_option("--config", config_path, "config JSON (defaults when omitted)");
  label->add_option("--out", label_out, "label dump destination (default stdout)");
  label->add_option("--epoch", label_epoch, "epoch for the dynamic threshold (default 0)");

  std::string ckpt_dir, export_path;
  double probe_fraction = 0.2;
  auto* eval = app.add_subcommand("eval", "retrieval metrics for a checkpoint");
  eval->add_option("--ckpt", ckpt_dir, "checkpoint dir (run dir, ckpt/, or epoch_<e>/)")
      ->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--out", out_dir, "where to put report.json and plots");
  eval->add_option("--probe-fraction", probe_fraction,
                   "identity share used as probes (default 0.2)");
  eval->add_option("--export-embeddings", export_path, "also dump per-instance features CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen(config_path, out_dir);
    }
    if (train->parsed()) {
      if (ablate_arms.empty() && train_data->count() == 0) {
        std::cerr << "siml: train needs --data unless --ablate is given\n";
        return 2;
      }
      return cmd_train(config_path, data_dir, out_dir, threads, threads_opt->count() > 0,
                       ablate_arms, seeds);
    }
    if (label->parsed()) {
      return cmd_label(embeddings_path, scenes_path, config_path, label_out, label_epoch);
    }
    if (eval->parsed()) {
      return cmd_eval(ckpt_dir, data_dir, out_dir, probe_fraction, export_path);
    }
  } catch (const siml::Error& error) {
    return report_error(error);
  } catch (const std::exception& error) {
    std::cerr << "siml: " << error.what() << "\n";
    return 1;
  }
  return 0;
}
