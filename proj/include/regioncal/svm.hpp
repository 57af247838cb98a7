#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "regioncal/dataset.hpp"
#include "regioncal/region_forest.hpp"
#include "regioncal/types.hpp"

namespace regioncal {

/// One-vs-all linear model. `weights` has dimension D+1; the last component
/// multiplies an implicit constant-1 feature and serves as the bias. A class
/// with no positive training samples is untrainable and scores -inf.
struct LinearModel {
  ClassId class_id = 0;
  FeatureVector weights;
  bool trainable = true;

  bool operator==(const LinearModel&) const = default;
};

/// w . [x; 1], or -inf for untrainable models.
double raw_score(const LinearModel& model, const FeatureVector& x);

struct TrainingSample {
  ImageId image = 0;
  RegionId region = 0;
  bool is_gt_region = false;
  ClassId gt_class = kInvalidClass;
  FeatureVector feature;
};

struct ClassTrainingSet {
  ClassId class_id = 0;
  std::vector<TrainingSample> positives;
  std::vector<TrainingSample> negatives;
};

struct TrainingSet {
  std::vector<ClassTrainingSet> per_class;
  std::vector<std::string> warnings;
};

/// Fully supervised assembly: positives for class c are the ground-truth
/// regions of c plus all region proposals with IoU > 0.5 against one of
/// them; negatives are every region of every image whose label set excludes
/// c. Classes without positives are recorded as warnings and left
/// untrainable.
TrainingSet assemble_training_set_fs(const Dataset& d);

struct MiningConfig {
  bool enabled = false;
  std::size_t batch_size = 256;
  // A negative enters the working set when w.x > -1 + threshold.
  double threshold = 0.0;
};

struct TrainOptions {
  double reg_strength = 1e-3;
  MiningConfig mining;
  // Stop when the objective gradient sup-norm drops below this.
  double gradient_tolerance = 1e-10;
  int max_epochs = 500;
};

struct TrainOutcome {
  LinearModel model;
  // Objective value at the start of every epoch plus the final value;
  // non-increasing by construction (line search only accepts decreases).
  std::vector<double> objective_per_epoch;
  int mining_rounds = 0;
  std::size_t working_negatives = 0;
};

/// Balanced inverse-frequency sample weights (w_pos, w_neg): each side of
/// the training set totals 1/2, so replicating samples of one side leaves
/// the objective unchanged.
std::pair<double, double> balanced_sample_weights(std::size_t n_pos, std::size_t n_neg);

/// reg/2 ||w||^2 + sum_s weight_s * max(0, 1 - y_s * w.[x_s; 1])^2.
double objective(const FeatureVector& w, const std::vector<FeatureVector>& features,
                 const std::vector<int>& labels, const std::vector<double>& weights, double reg);

/// Gradient of `objective` (exact where differentiable; squared hinge is C1).
FeatureVector objective_gradient(const FeatureVector& w, const std::vector<FeatureVector>& features,
                                 const std::vector<int>& labels, const std::vector<double>& weights,
                                 double reg);

/// Trains one class model on explicit positive/negative feature sets with
/// balanced weighting, optionally growing the negative working set by
/// hard-negative mining until a full scan of the pool adds nothing.
TrainOutcome train(ClassId class_id, const std::vector<FeatureVector>& positives,
                   const std::vector<FeatureVector>& negatives, const TrainOptions& options);

/// One full scan of the negative pool in batches of `batch_size`: indices
/// with w.x > -1 + threshold join `working` (kept sorted). Returns how many
/// were added.
std::size_t mine_hard_negatives(const LinearModel& model, const std::vector<FeatureVector>& pool,
                                std::size_t batch_size, double threshold,
                                std::vector<std::size_t>& working);

/// All per-class models for a training set; classes run in parallel.
std::vector<LinearModel> train_all(const TrainingSet& ts, std::size_t class_count,
                                   const TrainOptions& options, unsigned jobs = 1);

/// Raw score matrices for every image. Models must cover all classes and
/// match the dataset feature dimension.
std::vector<ScoreMatrix> score_all(const std::vector<LinearModel>& models, const Dataset& d,
                                   unsigned jobs = 1);

/// JSONL model files, one {class_id, weights} object per line.
void save_models(const std::vector<LinearModel>& models, const std::filesystem::path& path);
std::vector<LinearModel> load_models(const std::filesystem::path& path);

}  // namespace regioncal
