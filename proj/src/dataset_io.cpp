#include <fstream>
#include <sstream>

#include "json.hpp"
#include "regioncal/dataset.hpp"

namespace regioncal {

namespace {

using nlohmann::json;

json superpixel_to_json(const Superpixel& sp) {
  json j;
  j["id"] = sp.id;
  j["pixels"] = sp.pixel_count;
  if (!sp.gt_histogram.empty()) {
    json hist = json::array();
    for (const auto& [cls, count] : sp.gt_histogram) hist.push_back({cls, count});
    j["gt"] = std::move(hist);
  }
  return j;
}

json forest_to_json(const RegionForest& forest) {
  json nodes = json::array();
  for (const RegionNode& node : forest.nodes) {
    json n;
    n["id"] = node.id;
    if (node.is_leaf()) {
      n["leaf"] = node.leaf_link;
    } else {
      n["children"] = node.children;
    }
    nodes.push_back(std::move(n));
  }
  return json{{"roots", forest.roots}, {"nodes", std::move(nodes)}};
}

json image_to_json(const ImageRecord& image) {
  json j;
  j["id"] = image.id;
  json sps = json::array();
  for (const Superpixel& sp : image.superpixels) sps.push_back(superpixel_to_json(sp));
  j["superpixels"] = std::move(sps);
  j["forest"] = forest_to_json(image.forest);
  json feats = json::array();
  for (const FeatureVector& f : image.region_features) {
    if (f.empty()) {
      feats.push_back(nullptr);
    } else {
      feats.push_back(f);
    }
  }
  j["features"] = std::move(feats);
  j["image_labels"] = image.image_labels;
  if (!image.gt_region_features.empty()) {
    json gt = json::array();
    for (const auto& [cls, f] : image.gt_region_features) gt.push_back({cls, f});
    j["gt_region_features"] = std::move(gt);
  }
  return j;
}

ImageRecord image_from_json(const json& j, std::size_t line_no) {
  auto bad = [&](const std::string& msg) -> void {
    fail("parse", "line " + std::to_string(line_no) + ": " + msg);
  };
  if (!j.is_object()) bad("image record must be a JSON object");
  ImageRecord image;
  image.id = j.at("id").get<ImageId>();

  for (const json& js : j.at("superpixels")) {
    Superpixel sp;
    sp.id = js.at("id").get<SuperpixelId>();
    sp.pixel_count = js.at("pixels").get<std::uint64_t>();
    if (js.contains("gt")) {
      for (const json& entry : js.at("gt")) {
        if (!entry.is_array() || entry.size() != 2) bad("histogram entries must be [class, count]");
        sp.gt_histogram.emplace_back(entry[0].get<ClassId>(), entry[1].get<std::uint64_t>());
      }
    }
    image.superpixels.push_back(std::move(sp));
  }

  const json& jf = j.at("forest");
  image.forest.roots = jf.at("roots").get<std::vector<RegionId>>();
  for (const json& jn : jf.at("nodes")) {
    RegionNode node;
    node.id = jn.at("id").get<RegionId>();
    if (jn.contains("leaf")) {
      node.leaf_link = jn.at("leaf").get<SuperpixelId>();
    } else {
      node.children = jn.at("children").get<std::vector<RegionId>>();
      if (node.children.empty()) bad("internal region node has no children");
    }
    image.forest.nodes.push_back(std::move(node));
  }

  for (const json& f : j.at("features")) {
    if (f.is_null()) {
      image.region_features.emplace_back();
    } else {
      image.region_features.push_back(f.get<FeatureVector>());
    }
  }
  image.image_labels = j.at("image_labels").get<std::vector<ClassId>>();
  if (j.contains("gt_region_features")) {
    for (const json& entry : j.at("gt_region_features")) {
      if (!entry.is_array() || entry.size() != 2) bad("gt_region_features entries must be [class, values]");
      image.gt_region_features[entry[0].get<ClassId>()] = entry[1].get<FeatureVector>();
    }
  }
  return image;
}

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ofstream out(path);
  if (!out) fail("io", "cannot open " + name + " for writing");
  json header{{"version", 1},
              {"class_count", d.class_count},
              {"feature_dim", d.feature_dim},
              {"supervision", to_string(d.supervision)}};
  out << header.dump() << '\n';
  for (const ImageRecord& image : d.images) out << image_to_json(image).dump() << '\n';
  if (!out) fail("io", "failed while writing " + name);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + name + " for reading");
  std::string line;
  std::size_t line_no = 0;
  Dataset d;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail("parse", name + " line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (!j.is_object() || !j.contains("version"))
          fail("parse", name + " line 1: missing dataset header");
        if (j.at("version").get<int>() != 1)
          fail("parse", name + ": unsupported dataset version");
        d.class_count = j.at("class_count").get<std::size_t>();
        d.feature_dim = j.at("feature_dim").get<std::size_t>();
        const auto sup = j.at("supervision").get<std::string>();
        if (sup == "full") {
          d.supervision = Supervision::kFull;
        } else if (sup == "weak") {
          d.supervision = Supervision::kWeak;
        } else {
          fail("parse", name + ": unknown supervision '" + sup + "'");
        }
        have_header = true;
      } else {
        d.images.push_back(image_from_json(j, line_no));
      }
    } catch (const json::exception& e) {
      fail("parse", name + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) fail("parse", name + ": empty dataset file");

  for (ImageRecord& image : d.images) {
    std::vector<std::uint64_t> sp_pixels(image.superpixels.size());
    for (std::size_t s = 0; s < image.superpixels.size(); ++s)
      sp_pixels[s] = image.superpixels[s].pixel_count;
    recompute_forest_caches(image.forest, sp_pixels);
    if (image.region_features.size() < image.forest.nodes.size())
      image.region_features.resize(image.forest.nodes.size());
  }
  const auto violations = validate_dataset(d);
  if (!violations.empty()) {
    std::string msg = name + ": " + violations.front();
    if (violations.size() > 1)
      msg += " (and " + std::to_string(violations.size() - 1) + " more violations)";
    fail("validation", msg);
  }
  return d;
}

void apply_feature_sidecar(Dataset& d, const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + name + " for reading");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail("parse", name + " line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string where = name + " line " + std::to_string(line_no) + ": ";
    try {
      const auto image_id = j.at("image").get<ImageId>();
      if (image_id >= d.images.size()) fail("validation", where + "unknown image");
      ImageRecord& image = d.images[image_id];
      FeatureVector values = j.at("values").get<FeatureVector>();
      if (values.size() != d.feature_dim) fail("validation", where + "wrong feature dimension");
      for (double v : values) {
        if (!std::isfinite(v)) fail("validation", where + "non-finite feature value");
      }
      if (j.contains("gt_class")) {
        const auto cls = j.at("gt_class").get<ClassId>();
        if (cls >= d.class_count) fail("validation", where + "unknown class");
        image.gt_region_features[cls] = std::move(values);
      } else {
        const auto region = j.at("region").get<RegionId>();
        if (region >= image.forest.nodes.size()) fail("validation", where + "unknown region");
        image.region_features[region] = std::move(values);
      }
    } catch (const json::exception& e) {
      fail("parse", where + e.what());
    }
  }
}

}  // namespace regioncal
