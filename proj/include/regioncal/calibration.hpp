#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "regioncal/calibration_types.hpp"
#include "regioncal/dataset.hpp"
#include "regioncal/region_forest.hpp"
#include "regioncal/types.hpp"

namespace regioncal {

/// Class-balanced pixel error: 1 - mean over classes (with P_c > 0) of the
/// fraction of class-c pixels labeled c. Computed entirely from superpixel
/// ground-truth histograms. Errors when no class has pixels.
double fs_loss(const std::vector<Labeling>& labelings, const Dataset& d);

/// Image-label Hamming loss: predicted image label sets o_i are the classes
/// present in each image's labeling; every (image, class) mismatch against
/// l_i contributes 1/I_c, where I_c counts images whose label set contains
/// c. Classes appearing in no image are excluded.
double ws_loss(const std::vector<Labeling>& labelings, const Dataset& d);

/// Labels every image with label_image_fast; parallel across images.
std::vector<Labeling> label_dataset(const Dataset& d, const std::vector<ScoreMatrix>& scores,
                                    const CalibrationParams& params, unsigned jobs = 1);

/// The one function coordinate descent evaluates: label the dataset under
/// `params` and reduce with fs_loss or ws_loss. Raw scores are reused, never
/// recomputed.
double evaluate_loss(const Dataset& d, const std::vector<ScoreMatrix>& scores,
                     const CalibrationParams& params, LossKind kind, unsigned jobs = 1);

struct TraceEntry {
  ClassId class_id = 0;
  char param = 'a';  // 'a' or 'b'
  double old_value = 0.0;
  double new_value = 0.0;  // == old_value when the line search adopted nothing
  double loss = 0.0;       // loss after this step

  bool adopted() const { return new_value != old_value; }
};

struct CalibrationResult {
  LossKind kind = LossKind::kFullySupervised;
  CalibrationParams params;
  std::vector<TraceEntry> trace;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Joint coordinate descent from the init point: sweeps classes ascending,
/// line-searching a_c then b_c over the grid values, adopting a new value
/// only on a strict loss decrease, until one full sweep changes nothing.
CalibrationResult joint_calibrate(const Dataset& d, const std::vector<ScoreMatrix>& scores,
                                  LossKind kind, const GridSpec& grid = {}, unsigned jobs = 1);

/// Platt's cross-entropy for one class: targets (N+ + 1)/(N+ + 2) for
/// positives and 1/(N- + 2) for negatives; sigma as in `sigmoid`, clamped to
/// [1e-15, 1 - 1e-15] before the logs. Labels are +1/-1.
double platt_cross_entropy(const std::vector<double>& scores, const std::vector<int>& labels,
                           double a, double b);

/// Per-class sigmoid fit minimizing platt_cross_entropy with the same grid
/// coordinate descent as joint_calibrate. Errors unless both signs are
/// present. Returns (a, b).
std::pair<double, double> platt_fit(const std::vector<double>& scores,
                                    const std::vector<int>& labels, const GridSpec& grid = {});

/// JSON calibration file {version, loss_kind, params, trace, ...}.
void save_calibration(const CalibrationResult& result, const std::filesystem::path& path);
CalibrationResult load_calibration(const std::filesystem::path& path);

}  // namespace regioncal
