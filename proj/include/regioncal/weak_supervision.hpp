#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "regioncal/dataset.hpp"
#include "regioncal/svm.hpp"

namespace regioncal {

/// Latent region labels for the weakly supervised setting. Positives of a
/// class only ever come from images whose label set contains it; negatives
/// are fixed at initialization and never change.
struct LatentAssignment {
  // Indexed by class; (image, region) pairs sorted ascending.
  std::vector<std::vector<std::pair<ImageId, RegionId>>> positives;
  std::vector<std::vector<std::pair<ImageId, RegionId>>> negatives;

  bool operator==(const LatentAssignment&) const = default;
};

/// Initial assignment: every region of every image is positive for all
/// classes in the image's label set and negative for all classes outside it.
LatentAssignment init_latent(const Dataset& d);

/// Reassigns each region to the highest scoring class among the image's
/// labels (lowest class wins ties); negatives are carried over untouched.
LatentAssignment relabel(const Dataset& d, const std::vector<LinearModel>& models,
                         const LatentAssignment& current, unsigned jobs = 1);

struct RoundStats {
  std::vector<std::size_t> positives_per_class;
  // Image-label Hamming loss of the round's models at the default
  // calibration init point.
  double ws_loss_at_init = 0.0;
  bool fixed_point = false;
};

struct AlternationResult {
  std::vector<LinearModel> models;
  LatentAssignment assignment;
  std::vector<RoundStats> history;
};

/// Alternated optimization: init_latent, then up to `rounds` iterations of
/// {train all class SVMs on the current positives; relabel}. Stops early
/// when relabeling is a fixed point. `on_round(round, assignment)` fires
/// after each relabel (for snapshots).
AlternationResult alternate_train(
    const Dataset& d, int rounds, const TrainOptions& options, unsigned jobs = 1,
    const std::function<void(int, const LatentAssignment&)>& on_round = {});

/// JSONL snapshot: one {class_id, positives:[[image, region], ...]} per line.
void save_assignment(const LatentAssignment& assignment, const std::filesystem::path& path);

}  // namespace regioncal
