#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "regioncal/region_forest.hpp"
#include "regioncal/types.hpp"

namespace regioncal {

enum class Supervision {
  kFull,
  kWeak,
};

/// Atomic image fragment. Pixels are never materialized; a superpixel is
/// fully described by its pixel count and, in fully supervised datasets, the
/// ground-truth label histogram over those pixels.
struct Superpixel {
  SuperpixelId id = 0;
  std::uint64_t pixel_count = 0;
  // (class, pixel count) pairs, sorted by class, nonzero counts only.
  // Empty in weakly supervised datasets.
  std::vector<std::pair<ClassId, std::uint64_t>> gt_histogram;

  bool operator==(const Superpixel&) const = default;
};

struct ImageRecord {
  ImageId id = 0;
  std::vector<Superpixel> superpixels;
  RegionForest forest;
  // Indexed by RegionId; an empty vector means the feature is absent (for
  // example, not yet supplied by a sidecar file).
  std::vector<FeatureVector> region_features;
  // Ground-truth image label set l_i, sorted ascending.
  std::vector<ClassId> image_labels;
  // Features of ground-truth regions (one per class with nonzero majority
  // mass), synthesized with the same mixing rule as region features. Absent
  // for datasets whose features come from an external source without them.
  std::map<ClassId, FeatureVector> gt_region_features;

  std::uint64_t area() const {
    std::uint64_t total = 0;
    for (const auto& sp : superpixels) total += sp.pixel_count;
    return total;
  }

  bool operator==(const ImageRecord&) const = default;
};

struct Dataset {
  std::size_t class_count = 0;
  std::size_t feature_dim = 0;
  Supervision supervision = Supervision::kFull;
  std::vector<ImageRecord> images;

  bool operator==(const Dataset&) const = default;
};

/// Configuration of the synthetic generator. The seed fully determines the
/// output. Class pixel frequencies follow the power law
/// p(k) ~ (k+1)^(-imbalance_exponent), k = 0..class_count-1.
struct SyntheticConfig {
  std::size_t class_count = 8;
  std::size_t images = 16;
  std::size_t superpixels_per_image = 12;
  std::size_t hierarchy_count = 2;
  double imbalance_exponent = 1.0;
  // 0 = auto: max(class_count, 8). Must be >= class_count; class feature
  // means sit on a scaled simplex (pairwise distance = cluster_separation).
  std::size_t feature_dim = 0;
  double cluster_separation = 6.0;
  double noise_sigma = 0.5;
  // Fraction cap for the minority class mixed into each superpixel.
  double mix_fraction = 0.3;
  std::uint64_t seed = 1;
};

/// Deterministic synthetic dataset: power-law class frequencies, per-image
/// forests of `hierarchy_count` merge trees over one shared leaf set, and
/// region features that are the pixel-count-weighted mean of the per-class
/// cluster centers covered by the region, plus Gaussian noise.
Dataset generate_synthetic(const SyntheticConfig& config);

/// Drops pixel-level ground truth (superpixel histograms and ground-truth
/// region features), keeping image-level label sets: the weakly supervised
/// twin of a fully supervised dataset.
Dataset strip_to_weak(Dataset d);

/// Collects all dataset-invariant violations (empty == valid).
std::vector<std::string> validate_dataset(const Dataset& d);

/// Line-delimited JSON: a header line {version, class_count, feature_dim,
/// supervision} followed by one image per line. load(save(d)) == d.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Applies externally computed features from a JSONL sidecar. Lines are
/// either {image, region, values} or {image, gt_class, values}.
void apply_feature_sidecar(Dataset& d, const std::filesystem::path& path);

/// Pixel-weighted Intersection-over-Union of two superpixel sets of one
/// image. Errors when both sets are empty (undefined ratio).
double iou(const std::vector<SuperpixelId>& a, const std::vector<SuperpixelId>& b,
           const ImageRecord& image);

/// P_c for every class: total ground-truth pixels per class across the
/// dataset. Errors on weakly supervised datasets.
std::vector<std::uint64_t> class_pixel_counts(const Dataset& d);

/// Majority ground-truth class of a superpixel (lowest class wins ties).
ClassId superpixel_majority_class(const Superpixel& sp);

/// Ground-truth regions of an image: for each class, the set of superpixels
/// whose majority label is that class. Classes ascending, nonempty sets only.
std::vector<std::pair<ClassId, std::vector<SuperpixelId>>> gt_regions(const ImageRecord& image);

std::string to_string(Supervision s);

}  // namespace regioncal
