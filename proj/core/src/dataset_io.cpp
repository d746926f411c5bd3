#include "siml/dataset_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "siml/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset blobs assume a little-endian host");

namespace siml::dataset_io {

namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  }
  out << text;
  if (!out) {
    throw Error(Errc::io_failure, "failed writing " + path.string());
  }
}

ordered_json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::io_failure, "cannot open " + path.string());
  }
  ordered_json doc = ordered_json::parse(in, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(Errc::io_failure, path.string() + " is not valid JSON");
  }
  return doc;
}

std::vector<char> read_blob(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw Error(Errc::io_failure, "cannot open " + path.string());
  }
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<char> bytes(static_cast<std::size_t>(size));
  in.read(bytes.data(), size);
  if (!in) {
    throw Error(Errc::io_failure, "failed reading " + path.string());
  }
  return bytes;
}

ordered_json render_to_json(const synthdata::DatasetConfig& c) {
  return ordered_json{{"num_identities", c.num_identities},
                      {"num_scenes", c.num_scenes},
                      {"min_per_scene", c.min_per_scene},
                      {"max_per_scene", c.max_per_scene},
                      {"scene_height", c.scene_height},
                      {"scene_width", c.scene_width},
                      {"canonical_height", c.canonical_height},
                      {"canonical_width", c.canonical_width},
                      {"scale_min", c.scale_min},
                      {"scale_max", c.scale_max},
                      {"noise_level", c.noise_level},
                      {"seed", c.seed}};
}

synthdata::DatasetConfig render_from_json(const ordered_json& j) {
  synthdata::DatasetConfig c;
  try {
    c.num_identities = j.at("num_identities").get<int>();
    c.num_scenes = j.at("num_scenes").get<int>();
    c.min_per_scene = j.at("min_per_scene").get<int>();
    c.max_per_scene = j.at("max_per_scene").get<int>();
    c.scene_height = j.at("scene_height").get<int>();
    c.scene_width = j.at("scene_width").get<int>();
    c.canonical_height = j.at("canonical_height").get<int>();
    c.canonical_width = j.at("canonical_width").get<int>();
    c.scale_min = j.at("scale_min").get<double>();
    c.scale_max = j.at("scale_max").get<double>();
    c.noise_level = j.at("noise_level").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const ordered_json::exception& e) {
    throw Error(Errc::io_failure, std::string("manifest render block: ") + e.what());
  }
  return c;
}

}  // namespace

void save_dataset(const synthdata::Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(Errc::io_failure, "cannot create " + dir.string() + ": " + ec.message());
  }

  ordered_json manifest{
      {"format", "siml.dataset"},
      {"version", 1},
      {"instance_count", dataset.manifest.instance_count},
      {"num_identities", dataset.manifest.num_identities},
      {"num_scenes", dataset.manifest.num_scenes},
      {"seed", dataset.manifest.seed},
      {"render", render_to_json(dataset.manifest.render)},
      {"eval_only", ordered_json{{"identity_of", dataset.manifest.eval_only.identity_of}}},
  };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  std::ofstream rasters(dir / "scenes.bin", std::ios::binary);
  std::ofstream masks(dir / "masks.bin", std::ios::binary);
  if (!rasters || !masks) {
    throw Error(Errc::io_failure, "cannot open dataset blobs for writing");
  }

  ordered_json index{{"format", "siml.scenes"}, {"version", 1}};
  ordered_json scene_list = ordered_json::array();
  std::uint64_t raster_offset = 0;
  std::uint64_t mask_offset = 0;
  for (const synthdata::SceneRecord& scene : dataset.scenes) {
    ordered_json entry{{"scene_id", scene.scene_id},
                       {"height", scene.raster.height},
                       {"width", scene.raster.width},
                       {"raster_offset", raster_offset}};
    rasters.write(reinterpret_cast<const char*>(scene.raster.pix.data()),
                  static_cast<std::streamsize>(scene.raster.pix.size() * sizeof(double)));
    raster_offset += scene.raster.pix.size() * sizeof(double);

    ordered_json person_list = ordered_json::array();
    for (const synthdata::PersonGT& p : scene.persons) {
      person_list.push_back(ordered_json{{"instance_index", p.instance_index},
                                         {"x", p.x},
                                         {"y", p.y},
                                         {"w", p.w},
                                         {"h", p.h},
                                         {"scale_factor", p.scale_factor},
                                         {"mask_offset", mask_offset}});
      masks.write(reinterpret_cast<const char*>(p.mask.m.data()),
                  static_cast<std::streamsize>(p.mask.m.size()));
      mask_offset += p.mask.m.size();
    }
    entry["persons"] = std::move(person_list);
    scene_list.push_back(std::move(entry));
  }
  index["scenes"] = std::move(scene_list);
  if (!rasters || !masks) {
    throw Error(Errc::io_failure, "failed writing dataset blobs");
  }
  rasters.close();
  masks.close();
  write_text(dir / "scenes_index.json", index.dump(2) + "\n");
}

synthdata::Dataset load_dataset(const fs::path& dir) {
  const ordered_json manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", std::string()) != "siml.dataset") {
    throw Error(Errc::io_failure, "manifest.json has unexpected format tag");
  }

  synthdata::Dataset dataset;
  try {
    dataset.manifest.instance_count = manifest.at("instance_count").get<std::size_t>();
    dataset.manifest.num_identities = manifest.at("num_identities").get<int>();
    dataset.manifest.num_scenes = manifest.at("num_scenes").get<int>();
    dataset.manifest.seed = manifest.at("seed").get<std::uint64_t>();
    dataset.manifest.render = render_from_json(manifest.at("render"));
    dataset.manifest.eval_only.identity_of =
        manifest.at("eval_only").at("identity_of").get<std::vector<int>>();
  } catch (const ordered_json::exception& e) {
    throw Error(Errc::io_failure, std::string("manifest.json: ") + e.what());
  }
  if (dataset.manifest.eval_only.identity_of.size() != dataset.manifest.instance_count) {
    throw Error(Errc::io_failure, "manifest identity map length != instance_count");
  }

  const ordered_json index = read_json(dir / "scenes_index.json");
  if (index.value("format", std::string()) != "siml.scenes") {
    throw Error(Errc::io_failure, "scenes_index.json has unexpected format tag");
  }
  const std::vector<char> raster_bytes = read_blob(dir / "scenes.bin");
  const std::vector<char> mask_bytes = read_blob(dir / "masks.bin");

  std::size_t instances_seen = 0;
  try {
    for (const ordered_json& entry : index.at("scenes")) {
      synthdata::SceneRecord scene;
      scene.scene_id = entry.at("scene_id").get<int>();
      const int height = entry.at("height").get<int>();
      const int width = entry.at("width").get<int>();
      if (height <= 0 || width <= 0) {
        throw Error(Errc::io_failure, "scene index declares non-positive raster size");
      }
      scene.raster = Image(height, width);
      const auto offset = entry.at("raster_offset").get<std::uint64_t>();
      const std::size_t bytes = scene.raster.pix.size() * sizeof(double);
      if (offset + bytes > raster_bytes.size()) {
        throw Error(Errc::io_failure, "scene raster runs past scenes.bin");
      }
      std::memcpy(scene.raster.pix.data(), raster_bytes.data() + offset, bytes);

      for (const ordered_json& pj : entry.at("persons")) {
        synthdata::PersonGT p;
        p.instance_index = pj.at("instance_index").get<int>();
        p.x = pj.at("x").get<int>();
        p.y = pj.at("y").get<int>();
        p.w = pj.at("w").get<int>();
        p.h = pj.at("h").get<int>();
        p.scale_factor = pj.at("scale_factor").get<double>();
        if (p.w <= 0 || p.h <= 0) {
          throw Error(Errc::io_failure, "scene index declares non-positive person box");
        }
        p.mask = Mask(p.h, p.w);
        const auto moff = pj.at("mask_offset").get<std::uint64_t>();
        if (moff + p.mask.m.size() > mask_bytes.size()) {
          throw Error(Errc::io_failure, "person mask runs past masks.bin");
        }
        std::memcpy(p.mask.m.data(), mask_bytes.data() + moff, p.mask.m.size());
        if (p.instance_index < 0 ||
            static_cast<std::size_t>(p.instance_index) >= dataset.manifest.instance_count) {
          throw Error(Errc::io_failure, "person instance index outside manifest range");
        }
        p.identity_id = dataset.manifest.eval_only.identity_of[
            static_cast<std::size_t>(p.instance_index)];
        ++instances_seen;
        scene.persons.push_back(std::move(p));
      }
      dataset.scenes.push_back(std::move(scene));
    }
  } catch (const ordered_json::exception& e) {
    throw Error(Errc::io_failure, std::string("scenes_index.json: ") + e.what());
  }

  if (instances_seen != dataset.manifest.instance_count) {
    throw Error(Errc::io_failure, "scene index person count != manifest instance_count");
  }
  if (dataset.scenes.size() != static_cast<std::size_t>(dataset.manifest.num_scenes)) {
    throw Error(Errc::io_failure, "scene index scene count != manifest num_scenes");
  }
  return dataset;
}

}  // namespace siml::dataset_io
