#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "regioncal/calibration_types.hpp"
#include "regioncal/types.hpp"

namespace regioncal {

struct ImageRecord;

/// One region of an image. Leaves carry a link to their superpixel; internal
/// nodes own the disjoint union of their children. `pixel_count` and
/// `superpixels` are caches derived from the structure (see
/// recompute_forest_caches); `superpixels` is kept sorted.
struct RegionNode {
  RegionId id = 0;
  std::vector<RegionId> children;
  SuperpixelId leaf_link = kInvalidSuperpixel;
  std::uint64_t pixel_count = 0;
  std::vector<SuperpixelId> superpixels;

  bool is_leaf() const { return children.empty(); }

  bool operator==(const RegionNode&) const = default;
};

/// A set of bottom-up merge trees over one shared superpixel partition.
/// Region ids are dense: nodes[r].id == r. Every root covers the whole
/// image; distinct trees share only their leaves.
struct RegionForest {
  std::vector<RegionNode> nodes;
  std::vector<RegionId> roots;

  std::size_t region_count() const { return nodes.size(); }

  bool operator==(const RegionForest&) const = default;
};

/// Raw SVM scores, regions x classes, row-major. Columns of untrainable
/// classes hold -inf so they can never win the argmax.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t regions, std::size_t classes, double fill = 0.0)
      : rows_(regions), cols_(classes), data_(regions * classes, fill) {}

  std::size_t regions() const { return rows_; }
  std::size_t classes() const { return cols_; }

  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  const std::vector<double>& data() const { return data_; }

  bool operator==(const ScoreMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Per-superpixel class assignment, indexed by SuperpixelId.
using Labeling = std::vector<ClassId>;

/// Rebuilds the cached pixel counts and sorted superpixel sets from the
/// children/leaf_link structure. `superpixel_pixels[s]` is the pixel count of
/// superpixel s. Throws on structural damage that makes caches meaningless
/// (bad ids, cycles).
void recompute_forest_caches(RegionForest& forest, const std::vector<std::uint64_t>& superpixel_pixels);

/// Checks every forest invariant against the image and returns all
/// violations (empty == ok).
std::vector<std::string> validate_forest(const RegionForest& forest, const ImageRecord& image);

/// Top-down maximum propagation: walks each tree from its root, carrying the
/// best calibrated (score, label) seen so far, and merges the per-tree
/// results at the leaves. O(regions * classes).
///
/// Tie rule: a candidate replaces the incumbent only on a strictly greater
/// calibrated score; within a region the lowest class wins ties; ancestors
/// are installed before descendants, so the larger region survives ties; the
/// earlier tree in `roots` order survives cross-tree ties.
Labeling label_image_fast(const RegionForest& forest, const ScoreMatrix& scores,
                          const CalibrationParams& params);

/// Definition-level labeler: for each superpixel, enumerates all regions
/// containing it by explicit membership in their superpixel sets and takes
/// the argmax under the same tie rule. O(superpixels * regions * classes);
/// the oracle for label_image_fast.
Labeling label_image_naive(const RegionForest& forest, const ScoreMatrix& scores,
                           const CalibrationParams& params);

/// All regions whose superpixel set contains `sp`: the leaf plus its
/// ancestors across all trees, deduplicated, sorted by region id.
std::vector<RegionId> regions_containing(const RegionForest& forest, SuperpixelId sp);

}  // namespace regioncal
