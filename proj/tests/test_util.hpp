#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "regioncal/dataset.hpp"
#include "regioncal/region_forest.hpp"

namespace regioncal::testing {

inline RegionNode leaf(RegionId id, SuperpixelId sp) {
  RegionNode node;
  node.id = id;
  node.leaf_link = sp;
  return node;
}

inline RegionNode internal(RegionId id, std::vector<RegionId> children) {
  RegionNode node;
  node.id = id;
  node.children = std::move(children);
  return node;
}

/// Image with the given superpixel pixel counts and (class,count) histograms;
/// forest caches are rebuilt, image_labels derived from the histograms.
inline ImageRecord make_image(
    ImageId id, const std::vector<std::uint64_t>& pixel_counts,
    const std::vector<std::vector<std::pair<ClassId, std::uint64_t>>>& histograms,
    RegionForest forest) {
  ImageRecord image;
  image.id = id;
  for (std::size_t s = 0; s < pixel_counts.size(); ++s) {
    Superpixel sp;
    sp.id = static_cast<SuperpixelId>(s);
    sp.pixel_count = pixel_counts[s];
    if (s < histograms.size()) sp.gt_histogram = histograms[s];
    image.superpixels.push_back(std::move(sp));
  }
  image.forest = std::move(forest);
  recompute_forest_caches(image.forest, pixel_counts);
  image.region_features.resize(image.forest.nodes.size());
  std::vector<char> present;
  for (const auto& sp : image.superpixels) {
    for (const auto& [cls, count] : sp.gt_histogram) {
      if (present.size() <= cls) present.resize(cls + 1, 0);
      if (count > 0) present[cls] = 1;
    }
  }
  for (std::size_t c = 0; c < present.size(); ++c) {
    if (present[c]) image.image_labels.push_back(static_cast<ClassId>(c));
  }
  return image;
}

/// Leaves 0..sp_count-1 followed by one merge tree built by repeatedly
/// joining adjacent runs; arity and positions drawn from rng.
inline RegionId append_random_tree(RegionForest& forest, std::size_t sp_count,
                                   std::mt19937_64& rng) {
  std::vector<RegionId> active(sp_count);
  for (std::size_t s = 0; s < sp_count; ++s) active[s] = static_cast<RegionId>(s);
  std::bernoulli_distribution triple(0.3);
  while (active.size() > 1) {
    std::size_t arity = (active.size() >= 3 && triple(rng)) ? 3 : 2;
    std::uniform_int_distribution<std::size_t> pick(0, active.size() - arity);
    const std::size_t j = pick(rng);
    RegionNode node = internal(static_cast<RegionId>(forest.nodes.size()),
                               {active.begin() + static_cast<std::ptrdiff_t>(j),
                                active.begin() + static_cast<std::ptrdiff_t>(j + arity)});
    forest.nodes.push_back(std::move(node));
    active[j] = forest.nodes.back().id;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(j + 1),
                 active.begin() + static_cast<std::ptrdiff_t>(j + arity));
  }
  return active.front();
}

inline RegionForest random_forest(std::size_t sp_count, std::size_t tree_count,
                                  std::mt19937_64& rng) {
  RegionForest forest;
  for (std::size_t s = 0; s < sp_count; ++s)
    forest.nodes.push_back(leaf(static_cast<RegionId>(s), static_cast<SuperpixelId>(s)));
  for (std::size_t t = 0; t < tree_count; ++t)
    forest.roots.push_back(append_random_tree(forest, sp_count, rng));
  std::vector<std::uint64_t> pixels(sp_count, 1);
  recompute_forest_caches(forest, pixels);
  return forest;
}

/// Random score matrix; with tie_fraction > 0, that share of entries is
/// overwritten with values copied from other entries to force exact ties.
inline ScoreMatrix random_scores(std::size_t regions, std::size_t classes, std::mt19937_64& rng,
                                 double tie_fraction = 0.0, double magnitude = 4.0) {
  ScoreMatrix scores(regions, classes);
  std::uniform_real_distribution<double> value(-magnitude, magnitude);
  for (std::size_t r = 0; r < regions; ++r) {
    for (std::size_t c = 0; c < classes; ++c) scores.at(r, c) = value(rng);
  }
  if (tie_fraction > 0.0 && regions * classes > 1) {
    std::bernoulli_distribution hit(tie_fraction);
    std::uniform_int_distribution<std::size_t> any_r(0, regions - 1);
    std::uniform_int_distribution<std::size_t> any_c(0, classes - 1);
    for (std::size_t r = 0; r < regions; ++r) {
      for (std::size_t c = 0; c < classes; ++c) {
        if (hit(rng)) scores.at(r, c) = scores.at(any_r(rng), any_c(rng));
      }
    }
  }
  return scores;
}

inline CalibrationParams shared_params(std::size_t classes, double a = -7.0, double b = 0.0) {
  CalibrationParams params;
  params.a.assign(classes, a);
  params.b.assign(classes, b);
  return params;
}

inline CalibrationParams random_params(std::size_t classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> slope(-12.0, -2.0);
  std::uniform_real_distribution<double> offset(-10.0, 10.0);
  CalibrationParams params;
  for (std::size_t c = 0; c < classes; ++c) {
    params.a.push_back(slope(rng));
    params.b.push_back(offset(rng));
  }
  return params;
}

/// Scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("regioncal_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace regioncal::testing
