#include "regioncal/weak_supervision.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "regioncal/calibration.hpp"
#include "regioncal/parallel.hpp"

namespace regioncal {

LatentAssignment init_latent(const Dataset& d) {
  if (d.supervision != Supervision::kWeak)
    fail("supervision", "latent initialization expects a weakly supervised dataset");
  LatentAssignment assignment;
  assignment.positives.resize(d.class_count);
  assignment.negatives.resize(d.class_count);
  for (const ImageRecord& image : d.images) {
    std::vector<char> present(d.class_count, 0);
    for (ClassId cls : image.image_labels) present[cls] = 1;
    for (const RegionNode& node : image.forest.nodes) {
      for (std::size_t c = 0; c < d.class_count; ++c) {
        auto& side = present[c] ? assignment.positives[c] : assignment.negatives[c];
        side.emplace_back(image.id, node.id);
      }
    }
  }
  return assignment;
}

LatentAssignment relabel(const Dataset& d, const std::vector<LinearModel>& models,
                         const LatentAssignment& current, unsigned jobs) {
  if (models.size() != d.class_count)
    fail("validation", "relabel needs one model per class");
  std::vector<const LinearModel*> by_class(d.class_count, nullptr);
  for (const LinearModel& m : models) {
    if (m.class_id >= d.class_count) fail("validation", "model references unknown class");
    by_class[m.class_id] = &m;
  }
  for (const LinearModel* m : by_class) {
    if (m == nullptr) fail("validation", "relabel needs one model per class");
  }

  // Per-image assignments computed independently, merged in image order so the
  // result is identical for any job count.
  std::vector<std::vector<std::vector<RegionId>>> local(d.images.size());
  parallel_for(d.images.size(), resolve_jobs(jobs), [&](std::size_t i) {
    const ImageRecord& image = d.images[i];
    local[i].assign(d.class_count, {});
    if (image.image_labels.empty()) return;
    for (const RegionNode& node : image.forest.nodes) {
      const FeatureVector& f = image.region_features[node.id];
      if (f.empty())
        fail("features", "image " + std::to_string(image.id) + " region " +
                             std::to_string(node.id) + " has no feature");
      ClassId best = image.image_labels.front();
      double best_score = raw_score(*by_class[best], f);
      for (std::size_t k = 1; k < image.image_labels.size(); ++k) {
        const ClassId cls = image.image_labels[k];
        const double score = raw_score(*by_class[cls], f);
        if (score > best_score) {  // ties keep the lowest class id
          best = cls;
          best_score = score;
        }
      }
      local[i][best].push_back(node.id);
    }
  });

  LatentAssignment next;
  next.positives.resize(d.class_count);
  next.negatives = current.negatives;
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    for (std::size_t c = 0; c < d.class_count; ++c) {
      for (RegionId r : local[i][c])
        next.positives[c].emplace_back(static_cast<ImageId>(i), r);
    }
  }
  return next;
}

AlternationResult alternate_train(const Dataset& d, int rounds, const TrainOptions& options,
                                  unsigned jobs,
                                  const std::function<void(int, const LatentAssignment&)>& on_round) {
  if (d.supervision != Supervision::kWeak)
    fail("supervision", "alternating training expects a weakly supervised dataset");
  if (rounds <= 0) fail("config", "rounds must be positive");

  auto feature_of = [&](const std::pair<ImageId, RegionId>& ref) -> const FeatureVector& {
    const ImageRecord& image = d.images[ref.first];
    const FeatureVector& f = image.region_features[ref.second];
    if (f.empty())
      fail("features", "image " + std::to_string(ref.first) + " region " +
                           std::to_string(ref.second) + " has no feature");
    return f;
  };

  AlternationResult result;
  result.assignment = init_latent(d);
  const CalibrationParams init_params = GridSpec{}.initial_params(d.class_count);

  for (int round = 0; round < rounds; ++round) {
    std::vector<LinearModel> models(d.class_count);
    parallel_for(d.class_count, resolve_jobs(jobs), [&](std::size_t c) {
      models[c].class_id = static_cast<ClassId>(c);
      const auto& pos = result.assignment.positives[c];
      const auto& neg = result.assignment.negatives[c];
      if (pos.empty() || neg.empty()) {
        models[c].trainable = false;
        return;
      }
      std::vector<FeatureVector> pos_f;
      pos_f.reserve(pos.size());
      for (const auto& ref : pos) pos_f.push_back(feature_of(ref));
      std::vector<FeatureVector> neg_f;
      neg_f.reserve(neg.size());
      for (const auto& ref : neg) neg_f.push_back(feature_of(ref));
      models[c] = train(static_cast<ClassId>(c), pos_f, neg_f, options).model;
    });

    LatentAssignment next = relabel(d, models, result.assignment, jobs);
    RoundStats stats;
    stats.positives_per_class.resize(d.class_count);
    for (std::size_t c = 0; c < d.class_count; ++c)
      stats.positives_per_class[c] = next.positives[c].size();
    stats.fixed_point = next.positives == result.assignment.positives;
    const auto scores = score_all(models, d, jobs);
    stats.ws_loss_at_init = evaluate_loss(d, scores, init_params,
                                          LossKind::kWeaklySupervised, jobs);
    result.assignment = std::move(next);
    result.models = std::move(models);
    if (on_round) on_round(round + 1, result.assignment);
    result.history.push_back(std::move(stats));
    if (result.history.back().fixed_point) break;
  }
  return result;
}

void save_assignment(const LatentAssignment& assignment, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot open " + path.string() + " for writing");
  for (std::size_t c = 0; c < assignment.positives.size(); ++c) {
    nlohmann::json j;
    j["class_id"] = c;
    nlohmann::json pos = nlohmann::json::array();
    for (const auto& [image, region] : assignment.positives[c]) pos.push_back({image, region});
    j["positives"] = std::move(pos);
    out << j.dump() << '\n';
  }
  if (!out) fail("io", "failed while writing " + path.string());
}

}  // namespace regioncal
