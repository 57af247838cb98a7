#include "regioncal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "regioncal/parallel.hpp"

namespace regioncal {

namespace {

void check_labelings(const std::vector<Labeling>& labelings, const Dataset& d) {
  if (labelings.size() != d.images.size())
    fail("validation", "need one labeling per image");
  for (std::size_t i = 0; i < labelings.size(); ++i) {
    if (labelings[i].size() != d.images[i].superpixels.size())
      fail("validation", "labeling for image " + std::to_string(i) +
                             " does not cover every superpixel");
    for (ClassId cls : labelings[i]) {
      if (cls >= d.class_count)
        fail("validation", "labeling for image " + std::to_string(i) +
                               " assigns an unknown class");
    }
  }
}

}  // namespace

double fs_loss(const std::vector<Labeling>& labelings, const Dataset& d) {
  if (d.supervision != Supervision::kFull)
    fail("supervision", "pixel loss requires full supervision");
  check_labelings(labelings, d);

  const std::vector<std::uint64_t> pixels = class_pixel_counts(d);
  std::vector<std::uint64_t> correct(d.class_count, 0);
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const ImageRecord& image = d.images[i];
    for (std::size_t s = 0; s < image.superpixels.size(); ++s) {
      const ClassId label = labelings[i][s];
      for (const auto& [cls, count] : image.superpixels[s].gt_histogram) {
        if (cls == label) {
          correct[label] += count;
          break;
        }
      }
    }
  }

  std::size_t populated = 0;
  double mean = 0.0;
  for (std::size_t c = 0; c < d.class_count; ++c) {
    if (pixels[c] == 0) continue;
    ++populated;
    mean += static_cast<double>(correct[c]) / static_cast<double>(pixels[c]);
  }
  if (populated == 0) fail("validation", "no class has any ground-truth pixels");
  return 1.0 - mean / static_cast<double>(populated);
}

double ws_loss(const std::vector<Labeling>& labelings, const Dataset& d) {
  check_labelings(labelings, d);

  std::vector<std::uint64_t> images_with(d.class_count, 0);
  std::vector<std::uint64_t> mismatches(d.class_count, 0);
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const ImageRecord& image = d.images[i];
    std::vector<char> truth(d.class_count, 0);
    for (ClassId cls : image.image_labels) {
      truth[cls] = 1;
      ++images_with[cls];
    }
    std::vector<char> predicted(d.class_count, 0);
    for (ClassId cls : labelings[i]) predicted[cls] = 1;
    for (std::size_t c = 0; c < d.class_count; ++c) {
      if (truth[c] != predicted[c]) ++mismatches[c];
    }
  }

  double loss = 0.0;
  for (std::size_t c = 0; c < d.class_count; ++c) {
    if (images_with[c] == 0) continue;  // class absent everywhere: no reference count
    loss += static_cast<double>(mismatches[c]) / static_cast<double>(images_with[c]);
  }
  return loss;
}

std::vector<Labeling> label_dataset(const Dataset& d, const std::vector<ScoreMatrix>& scores,
                                    const CalibrationParams& params, unsigned jobs) {
  if (scores.size() != d.images.size()) fail("dimension", "need one score matrix per image");
  if (params.class_count() != d.class_count)
    fail("dimension", "calibration parameters do not cover every class");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].regions() != d.images[i].forest.nodes.size() ||
        scores[i].classes() != d.class_count)
      fail("dimension", "score matrix for image " + std::to_string(i) + " has wrong shape");
  }
  std::vector<Labeling> labelings(d.images.size());
  parallel_for(d.images.size(), resolve_jobs(jobs), [&](std::size_t i) {
    labelings[i] = label_image_fast(d.images[i].forest, scores[i], params);
  });
  return labelings;
}

double evaluate_loss(const Dataset& d, const std::vector<ScoreMatrix>& scores,
                     const CalibrationParams& params, LossKind kind, unsigned jobs) {
  const auto labelings = label_dataset(d, scores, params, jobs);
  return kind == LossKind::kFullySupervised ? fs_loss(labelings, d) : ws_loss(labelings, d);
}

CalibrationResult joint_calibrate(const Dataset& d, const std::vector<ScoreMatrix>& scores,
                                  LossKind kind, const GridSpec& grid, unsigned jobs) {
  grid.validate();
  if (kind == LossKind::kFullySupervised && d.supervision != Supervision::kFull)
    fail("supervision", "pixel-loss calibration requires full supervision");

  CalibrationResult result;
  result.kind = kind;
  result.params = grid.initial_params(d.class_count);
  const std::vector<double> a_values = grid.a_values();
  const std::vector<double> b_values = grid.b_values();

  double current = evaluate_loss(d, scores, result.params, kind, jobs);
  result.initial_loss = current;

  const std::size_t max_sweeps = 10000;
  for (std::size_t sweep = 0;; ++sweep) {
    if (sweep >= max_sweeps) fail("internal", "calibration failed to converge");
    bool changed = false;
    for (std::size_t c = 0; c < d.class_count; ++c) {
      for (int which = 0; which < 2; ++which) {
        double& slot = which == 0 ? result.params.a[c] : result.params.b[c];
        const std::vector<double>& values = which == 0 ? a_values : b_values;
        const double old_value = slot;
        double best_value = old_value;
        double best_loss = current;
        for (double v : values) {
          if (v == old_value) continue;  // same loss by construction, never a strict improvement
          slot = v;
          const double loss = evaluate_loss(d, scores, result.params, kind, jobs);
          if (loss < best_loss) {
            best_loss = loss;
            best_value = v;
          }
        }
        slot = best_value;
        TraceEntry entry;
        entry.class_id = static_cast<ClassId>(c);
        entry.param = which == 0 ? 'a' : 'b';
        entry.old_value = old_value;
        entry.new_value = best_value;
        entry.loss = best_loss;
        result.trace.push_back(entry);
        if (best_value != old_value) {
          changed = true;
          current = best_loss;
        }
      }
    }
    if (!changed) break;
  }
  result.final_loss = current;
  return result;
}

double platt_cross_entropy(const std::vector<double>& scores, const std::vector<int>& labels,
                           double a, double b) {
  if (scores.size() != labels.size()) fail("dimension", "scores and labels must align");
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  for (int y : labels) {
    if (y == 1) {
      ++n_pos;
    } else if (y == -1) {
      ++n_neg;
    } else {
      fail("validation", "labels must be +1 or -1");
    }
  }
  const double t_pos = (static_cast<double>(n_pos) + 1.0) / (static_cast<double>(n_pos) + 2.0);
  const double t_neg = 1.0 / (static_cast<double>(n_neg) + 2.0);

  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double t = labels[i] == 1 ? t_pos : t_neg;
    double p = sigmoid(scores[i], a, b);
    p = std::clamp(p, 1e-15, 1.0 - 1e-15);
    total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return total;
}

std::pair<double, double> platt_fit(const std::vector<double>& scores,
                                    const std::vector<int>& labels, const GridSpec& grid) {
  grid.validate();
  bool has_pos = false;
  bool has_neg = false;
  for (int y : labels) {
    if (y == 1) has_pos = true;
    if (y == -1) has_neg = true;
  }
  if (!has_pos || !has_neg)
    fail("training", "sigmoid fitting requires both positive and negative samples");

  double a = grid.init_a;
  double b = grid.init_b;
  double current = platt_cross_entropy(scores, labels, a, b);
  const std::vector<double> a_values = grid.a_values();
  const std::vector<double> b_values = grid.b_values();
  while (true) {
    bool changed = false;
    for (int which = 0; which < 2; ++which) {
      double& slot = which == 0 ? a : b;
      const std::vector<double>& values = which == 0 ? a_values : b_values;
      const double old_value = slot;
      double best_value = old_value;
      double best_loss = current;
      for (double v : values) {
        if (v == old_value) continue;
        const double loss = platt_cross_entropy(scores, labels, which == 0 ? v : a,
                                                which == 0 ? b : v);
        if (loss < best_loss) {
          best_loss = loss;
          best_value = v;
        }
      }
      if (best_value != old_value) {
        slot = best_value;
        current = best_loss;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return {a, b};
}

void save_calibration(const CalibrationResult& result, const std::filesystem::path& path) {
  const std::string name = path.string();
  nlohmann::json j;
  j["version"] = 1;
  j["loss_kind"] = result.kind == LossKind::kFullySupervised ? "fs" : "ws";
  j["initial_loss"] = result.initial_loss;
  j["final_loss"] = result.final_loss;
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t c = 0; c < result.params.class_count(); ++c)
    params.push_back({{"class_id", c}, {"a", result.params.a[c]}, {"b", result.params.b[c]}});
  j["params"] = std::move(params);
  nlohmann::json trace = nlohmann::json::array();
  for (const TraceEntry& entry : result.trace)
    trace.push_back({{"class_id", entry.class_id},
                     {"param", std::string(1, entry.param)},
                     {"old", entry.old_value},
                     {"new", entry.new_value},
                     {"loss", entry.loss}});
  j["trace"] = std::move(trace);

  std::ofstream out(path);
  if (!out) fail("io", "cannot open " + name + " for writing");
  out << j.dump(2) << '\n';
  if (!out) fail("io", "failed while writing " + name);
}

CalibrationResult load_calibration(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + name + " for reading");
  nlohmann::json j;
  try {
    in >> j;
    CalibrationResult result;
    const auto kind = j.at("loss_kind").get<std::string>();
    if (kind == "fs") {
      result.kind = LossKind::kFullySupervised;
    } else if (kind == "ws") {
      result.kind = LossKind::kWeaklySupervised;
    } else {
      fail("parse", name + ": unknown loss_kind '" + kind + "'");
    }
    result.initial_loss = j.at("initial_loss").get<double>();
    result.final_loss = j.at("final_loss").get<double>();
    const nlohmann::json& params = j.at("params");
    result.params.a.resize(params.size());
    result.params.b.resize(params.size());
    for (const nlohmann::json& p : params) {
      const auto c = p.at("class_id").get<std::size_t>();
      if (c >= params.size()) fail("validation", name + ": calibration class ids not dense");
      result.params.a[c] = p.at("a").get<double>();
      result.params.b[c] = p.at("b").get<double>();
    }
    if (j.contains("trace")) {
      for (const nlohmann::json& t : j.at("trace")) {
        TraceEntry entry;
        entry.class_id = t.at("class_id").get<ClassId>();
        entry.param = t.at("param").get<std::string>().at(0);
        entry.old_value = t.at("old").get<double>();
        entry.new_value = t.at("new").get<double>();
        entry.loss = t.at("loss").get<double>();
        result.trace.push_back(entry);
      }
    }
    return result;
  } catch (const nlohmann::json::exception& e) {
    fail("parse", name + ": " + e.what());
  }
}

}  // namespace regioncal
