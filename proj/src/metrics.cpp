#include "regioncal/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "regioncal/calibration.hpp"

namespace regioncal {

EvalReport evaluate(const std::vector<Labeling>& labelings, const Dataset& d) {
  if (d.supervision != Supervision::kFull)
    fail("supervision", "pixel evaluation requires full supervision");

  EvalReport report;
  report.confusion.assign(d.class_count, std::vector<std::uint64_t>(d.class_count, 0));
  if (labelings.size() != d.images.size())
    fail("validation", "need one labeling per image");
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const ImageRecord& image = d.images[i];
    if (labelings[i].size() != image.superpixels.size())
      fail("validation", "labeling for image " + std::to_string(i) +
                             " does not cover every superpixel");
    for (std::size_t s = 0; s < image.superpixels.size(); ++s) {
      const ClassId label = labelings[i][s];
      if (label >= d.class_count)
        fail("validation", "labeling for image " + std::to_string(i) +
                               " assigns an unknown class");
      for (const auto& [cls, count] : image.superpixels[s].gt_histogram)
        report.confusion[cls][label] += count;
    }
  }

  std::uint64_t correct_total = 0;
  report.total_pixels = 0;
  for (std::size_t c = 0; c < d.class_count; ++c) {
    ClassStats stats;
    stats.class_id = static_cast<ClassId>(c);
    for (std::uint64_t n : report.confusion[c]) stats.pixels += n;
    stats.correct = report.confusion[c][c];
    stats.accuracy = stats.pixels > 0
                         ? static_cast<double>(stats.correct) / static_cast<double>(stats.pixels)
                         : 0.0;
    report.per_class.push_back(stats);
    correct_total += stats.correct;
    report.total_pixels += stats.pixels;
  }
  // Shares the exact loss computation so that accuracy and loss always agree.
  report.class_average_accuracy = 1.0 - fs_loss(labelings, d);
  report.global_accuracy =
      report.total_pixels > 0
          ? static_cast<double>(correct_total) / static_cast<double>(report.total_pixels)
          : 0.0;
  return report;
}

WeakEvalReport evaluate_weak(const std::vector<Labeling>& labelings, const Dataset& d) {
  if (labelings.size() != d.images.size())
    fail("validation", "need one labeling per image");

  WeakEvalReport report;
  report.per_class.resize(d.class_count);
  for (std::size_t c = 0; c < d.class_count; ++c)
    report.per_class[c].class_id = static_cast<ClassId>(c);

  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const ImageRecord& image = d.images[i];
    if (labelings[i].size() != image.superpixels.size())
      fail("validation", "labeling for image " + std::to_string(i) +
                             " does not cover every superpixel");
    std::vector<char> truth(d.class_count, 0);
    for (ClassId cls : image.image_labels) truth[cls] = 1;
    std::vector<char> predicted(d.class_count, 0);
    for (ClassId cls : labelings[i]) {
      if (cls >= d.class_count)
        fail("validation", "labeling for image " + std::to_string(i) +
                               " assigns an unknown class");
      predicted[cls] = 1;
    }
    for (std::size_t c = 0; c < d.class_count; ++c) {
      WeakClassStats& stats = report.per_class[c];
      if (truth[c]) ++stats.images_with_label;
      if (truth[c] && predicted[c]) ++stats.true_positives;
      if (!truth[c] && predicted[c]) ++stats.false_positives;
      if (truth[c] && !predicted[c]) ++stats.false_negatives;
    }
  }
  for (WeakClassStats& stats : report.per_class) {
    const std::uint64_t detected = stats.true_positives + stats.false_positives;
    const std::uint64_t actual = stats.true_positives + stats.false_negatives;
    stats.precision =
        detected > 0 ? static_cast<double>(stats.true_positives) / static_cast<double>(detected)
                     : 0.0;
    stats.recall =
        actual > 0 ? static_cast<double>(stats.true_positives) / static_cast<double>(actual) : 0.0;
  }
  report.hamming_loss = ws_loss(labelings, d);
  return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["class_average_accuracy"] = report.class_average_accuracy;
  j["global_accuracy"] = report.global_accuracy;
  j["total_pixels"] = report.total_pixels;
  nlohmann::json per_class = nlohmann::json::array();
  for (const ClassStats& stats : report.per_class)
    per_class.push_back({{"class_id", stats.class_id},
                         {"pixels", stats.pixels},
                         {"correct", stats.correct},
                         {"accuracy", stats.accuracy}});
  j["per_class"] = std::move(per_class);
  j["confusion"] = report.confusion;
  return j;
}

nlohmann::json report_to_json(const WeakEvalReport& report) {
  nlohmann::json j;
  j["hamming_loss"] = report.hamming_loss;
  nlohmann::json per_class = nlohmann::json::array();
  for (const WeakClassStats& stats : report.per_class)
    per_class.push_back({{"class_id", stats.class_id},
                         {"images_with_label", stats.images_with_label},
                         {"true_positives", stats.true_positives},
                         {"false_positives", stats.false_positives},
                         {"false_negatives", stats.false_negatives},
                         {"precision", stats.precision},
                         {"recall", stats.recall}});
  j["per_class"] = std::move(per_class);
  return j;
}

std::string report_to_text(const EvalReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "class" << std::right << std::setw(12) << "pixels"
      << std::setw(12) << "correct" << std::setw(12) << "accuracy" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const ClassStats& stats : report.per_class) {
    out << std::left << std::setw(8) << stats.class_id << std::right << std::setw(12)
        << stats.pixels << std::setw(12) << stats.correct << std::setw(12) << stats.accuracy
        << '\n';
  }
  out << "class-average accuracy: " << report.class_average_accuracy << '\n';
  out << "global accuracy:        " << report.global_accuracy << '\n';
  return out.str();
}

std::string report_to_text(const WeakEvalReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "class" << std::right << std::setw(10) << "images"
      << std::setw(8) << "tp" << std::setw(8) << "fp" << std::setw(8) << "fn" << std::setw(12)
      << "precision" << std::setw(12) << "recall" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const WeakClassStats& stats : report.per_class) {
    out << std::left << std::setw(8) << stats.class_id << std::right << std::setw(10)
        << stats.images_with_label << std::setw(8) << stats.true_positives << std::setw(8)
        << stats.false_positives << std::setw(8) << stats.false_negatives << std::setw(12)
        << stats.precision << std::setw(12)
        << stats.recall << '\n';
  }
  out << "image-label loss: " << report.hamming_loss << '\n';
  return out.str();
}

}  // namespace regioncal
