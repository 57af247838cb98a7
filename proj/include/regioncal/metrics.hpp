#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regioncal/dataset.hpp"
#include "regioncal/region_forest.hpp"

#include "json.hpp"

namespace regioncal {

struct ClassStats {
  ClassId class_id = 0;
  std::uint64_t pixels = 0;   // P_c
  std::uint64_t correct = 0;  // class-c pixels labeled c
  double accuracy = 0.0;      // correct / pixels, 0 when P_c == 0
};

struct EvalReport {
  std::vector<ClassStats> per_class;
  // Mean per-class accuracy over classes with pixels; equals 1 - fs_loss
  // bit-exactly (shared computation).
  double class_average_accuracy = 0.0;
  // Plain pixel accuracy, reported for reference, never optimized.
  double global_accuracy = 0.0;
  // confusion[gt][predicted] in pixels; row sums equal P_c.
  std::vector<std::vector<std::uint64_t>> confusion;
  std::uint64_t total_pixels = 0;
};

/// Pixel-level evaluation of a labeling against a fully supervised dataset.
EvalReport evaluate(const std::vector<Labeling>& labelings, const Dataset& d);

struct WeakClassStats {
  ClassId class_id = 0;
  std::uint64_t images_with_label = 0;  // I_c
  std::uint64_t true_positives = 0;
  std::uint64_t false_positives = 0;
  std::uint64_t false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct WeakEvalReport {
  std::vector<WeakClassStats> per_class;
  // Equals ws_loss of the same labelings bit-exactly (shared computation).
  double hamming_loss = 0.0;
};

/// Image-label evaluation: per-class precision/recall of the predicted image
/// label sets against l_i, plus the Hamming loss.
WeakEvalReport evaluate_weak(const std::vector<Labeling>& labelings, const Dataset& d);

nlohmann::json report_to_json(const EvalReport& report);
nlohmann::json report_to_json(const WeakEvalReport& report);
std::string report_to_text(const EvalReport& report);
std::string report_to_text(const WeakEvalReport& report);

}  // namespace regioncal
