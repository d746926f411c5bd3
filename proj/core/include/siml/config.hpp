#pragma once

#include <filesystem>
#include <string>

#include "siml/synthdata.hpp"
#include "siml/trainer.hpp"

namespace siml::config {

/// Everything one run needs, split the way the JSON document is: a `data`
/// section for generation plus the training/eval settings.
struct RunConfig {
  synthdata::DatasetConfig data;
  trainer::TrainConfig train;
};

/// Parses a config document.  Sections and keys may be omitted (defaults
/// apply); unknown keys anywhere are an error naming the offending path.
/// The result is fully validated.
RunConfig parse(const std::string& text);

/// parse() over the file's bytes; distinguishes unreadable files from bad
/// content.
RunConfig load_file(const std::filesystem::path& path);

/// Canonical serialization with every field spelled out.  Feeding the text
/// back through parse() reproduces `config` exactly, and serializing again
/// yields the identical bytes.
std::string resolve(const RunConfig& config);

/// Writes resolve() to `path` (conventionally resolved_config.json).
void write_resolved(const std::filesystem::path& path, const RunConfig& config);

}  // namespace siml::config
