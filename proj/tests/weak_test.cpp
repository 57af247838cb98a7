#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "regioncal/dataset.hpp"
#include "regioncal/svm.hpp"
#include "regioncal/weak_supervision.hpp"
#include "test_util.hpp"

using namespace regioncal;
using namespace regioncal::testing;

namespace {

/// Weak dataset with explicit image label sets; every image gets S leaf
/// superpixels plus one root region and hand-settable features.
Dataset weak_dataset(const std::vector<std::vector<ClassId>>& labels, std::size_t classes,
                     std::size_t sp_per_image, std::size_t feature_dim) {
  Dataset d;
  d.class_count = classes;
  d.feature_dim = feature_dim;
  d.supervision = Supervision::kWeak;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    RegionForest f;
    for (RegionId s = 0; s < sp_per_image; ++s) f.nodes.push_back(leaf(s, s));
    std::vector<RegionId> all(sp_per_image);
    for (RegionId s = 0; s < sp_per_image; ++s) all[s] = s;
    f.nodes.push_back(internal(static_cast<RegionId>(sp_per_image), all));
    f.roots = {static_cast<RegionId>(sp_per_image)};
    ImageRecord image = make_image(static_cast<ImageId>(i),
                                   std::vector<std::uint64_t>(sp_per_image, 10), {}, f);
    image.id = static_cast<ImageId>(i);
    image.image_labels = labels[i];
    for (auto& feat : image.region_features) feat.assign(feature_dim, 0.0);
    d.images.push_back(std::move(image));
  }
  return d;
}

/// Identity-like model: score of class c is feature component c.
std::vector<LinearModel> axis_models(std::size_t classes, std::size_t feature_dim) {
  std::vector<LinearModel> models;
  for (ClassId c = 0; c < classes; ++c) {
    LinearModel m;
    m.class_id = c;
    m.weights.assign(feature_dim + 1, 0.0);
    m.weights[c] = 1.0;
    models.push_back(std::move(m));
  }
  return models;
}

/// Pixel-majority class of a region in a fully supervised image.
ClassId region_majority(const ImageRecord& image, RegionId r, std::size_t classes) {
  std::vector<std::uint64_t> mass(classes, 0);
  for (SuperpixelId s : image.forest.nodes[r].superpixels) {
    for (const auto& [cls, count] : image.superpixels[s].gt_histogram) mass[cls] += count;
  }
  ClassId best = 0;
  for (ClassId c = 1; c < classes; ++c) {
    if (mass[c] > mass[best]) best = c;
  }
  return best;
}

}  // namespace

TEST_CASE("init_latent assigns by image label membership") {
  const Dataset d = weak_dataset({{0, 1}, {2}}, 3, 2, 3);
  const LatentAssignment a = init_latent(d);
  REQUIRE(a.positives.size() == 3);

  // Image 0 has 3 regions (2 leaves + root), all positive for classes 0 and 1.
  const std::vector<std::pair<ImageId, RegionId>> image0 = {{0, 0}, {0, 1}, {0, 2}};
  const std::vector<std::pair<ImageId, RegionId>> image1 = {{1, 0}, {1, 1}, {1, 2}};
  CHECK(a.positives[0] == image0);
  CHECK(a.positives[1] == image0);
  CHECK(a.positives[2] == image1);
  CHECK(a.negatives[0] == image1);
  CHECK(a.negatives[1] == image1);
  CHECK(a.negatives[2] == image0);

  SUBCASE("counts match a brute-force recount on generated data") {
    SyntheticConfig config;
    config.class_count = 5;
    config.images = 12;
    config.superpixels_per_image = 7;
    config.seed = 81;
    const Dataset gen = strip_to_weak(generate_synthetic(config));
    const LatentAssignment latent = init_latent(gen);
    for (ClassId c = 0; c < 5; ++c) {
      std::size_t expect_pos = 0;
      std::size_t expect_neg = 0;
      for (const ImageRecord& image : gen.images) {
        const bool has = std::binary_search(image.image_labels.begin(),
                                            image.image_labels.end(), c);
        (has ? expect_pos : expect_neg) += image.forest.nodes.size();
      }
      CHECK(latent.positives[c].size() == expect_pos);
      CHECK(latent.negatives[c].size() == expect_neg);
    }
  }
  SUBCASE("fully supervised input is rejected") {
    const Dataset full = generate_synthetic(SyntheticConfig{});
    try {
      init_latent(full);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == "supervision");
    }
  }
}

TEST_CASE("relabel assigns each region to its best in-label class") {
  Dataset d = weak_dataset({{0, 1}}, 2, 2, 2);
  // Region features chosen so the axis models score (3.2, -1), (0.5, 2.0),
  // and a tie (2.0, 2.0) on the three regions.
  d.images[0].region_features[0] = {3.2, -1.0};
  d.images[0].region_features[1] = {0.5, 2.0};
  d.images[0].region_features[2] = {2.0, 2.0};
  const auto models = axis_models(2, 2);
  const LatentAssignment current = init_latent(d);
  const LatentAssignment next = relabel(d, models, current);

  CHECK(next.positives[0] ==
        std::vector<std::pair<ImageId, RegionId>>{{0, 0}, {0, 2}});  // tie goes to class 0
  CHECK(next.positives[1] == std::vector<std::pair<ImageId, RegionId>>{{0, 1}});
  CHECK(next.negatives == current.negatives);
}

TEST_CASE("relabel on a single-label image is the identity") {
  Dataset d = weak_dataset({{1}}, 3, 3, 3);
  std::mt19937_64 rng(82);
  std::uniform_real_distribution<double> value(-2.0, 2.0);
  for (auto& f : d.images[0].region_features) {
    for (double& v : f) v = value(rng);
  }
  const auto models = axis_models(3, 3);
  const LatentAssignment current = init_latent(d);
  const LatentAssignment next = relabel(d, models, current);
  CHECK(next == current);
}

TEST_CASE("relabel restricts choices to the image label set") {
  // Class 2 scores highest everywhere but never appears in any label set.
  Dataset d = weak_dataset({{0, 1}, {0}}, 3, 2, 3);
  for (auto& image : d.images) {
    for (auto& f : image.region_features) f = {0.5, 0.25, 9.0};
  }
  const auto next = relabel(d, axis_models(3, 3), init_latent(d));
  CHECK(next.positives[2].empty());
  CHECK(next.positives[0].size() + next.positives[1].size() == 6);
}

TEST_CASE("relabel matches a brute-force oracle on random instances") {
  std::mt19937_64 rng(83);
  SyntheticConfig config;
  config.class_count = 4;
  config.images = 10;
  config.superpixels_per_image = 6;
  config.seed = 84;
  const Dataset d = strip_to_weak(generate_synthetic(config));

  std::uniform_real_distribution<double> value(-1.0, 1.0);
  std::vector<LinearModel> models;
  for (ClassId c = 0; c < 4; ++c) {
    LinearModel m;
    m.class_id = c;
    m.weights.resize(d.feature_dim + 1);
    for (double& w : m.weights) w = value(rng);
    models.push_back(std::move(m));
  }

  const LatentAssignment current = init_latent(d);
  const LatentAssignment next = relabel(d, models, current);

  std::vector<std::vector<std::pair<ImageId, RegionId>>> expected(4);
  for (const ImageRecord& image : d.images) {
    for (const RegionNode& node : image.forest.nodes) {
      ClassId best = kInvalidClass;
      double best_score = 0.0;
      for (ClassId cls : image.image_labels) {
        const double s = raw_score(models[cls], image.region_features[node.id]);
        // Labels are ascending, so keeping only strict improvements breaks
        // ties toward the lowest class, the documented rule.
        if (best == kInvalidClass || s > best_score) {
          best = cls;
          best_score = s;
        }
      }
      if (best != kInvalidClass) expected[best].emplace_back(image.id, node.id);
    }
  }
  CHECK(next.positives == expected);
}

TEST_CASE("alternation stops at a fixed point on single-label images") {
  Dataset d = weak_dataset({{0}, {0}, {1}, {1}}, 2, 3, 2);
  std::mt19937_64 rng(85);
  std::normal_distribution<double> noise(0.0, 0.2);
  for (auto& image : d.images) {
    const double base = image.image_labels[0] == 0 ? 1.5 : -1.5;
    for (auto& f : image.region_features) f = {base + noise(rng), -base + noise(rng)};
  }

  TrainOptions options;
  std::vector<int> seen_rounds;
  const AlternationResult result = alternate_train(
      d, 5, options, 1, [&](int round, const LatentAssignment&) { seen_rounds.push_back(round); });

  // Single-label images can never be reassigned: round one is already fixed.
  REQUIRE(result.history.size() == 1);
  CHECK(result.history[0].fixed_point);
  CHECK(seen_rounds == std::vector<int>{1});
  CHECK(result.assignment == init_latent(d));
  CHECK(result.history[0].positives_per_class ==
        std::vector<std::size_t>{8, 8});  // 4 regions per image, 2 images per class
}

TEST_CASE("alternation keeps negatives fixed and converges to a relabel fixed point") {
  SyntheticConfig config;
  config.class_count = 4;
  config.images = 24;
  config.superpixels_per_image = 8;
  config.cluster_separation = 10.0;
  config.noise_sigma = 0.1;
  config.mix_fraction = 0.0;
  config.seed = 86;
  const Dataset full = generate_synthetic(config);
  const Dataset d = strip_to_weak(full);

  TrainOptions options;
  const AlternationResult result = alternate_train(d, 12, options);
  REQUIRE_FALSE(result.history.empty());

  SUBCASE("negatives never change") {
    CHECK(result.assignment.negatives == init_latent(d).negatives);
  }
  SUBCASE("per-round statistics are populated") {
    for (const RoundStats& stats : result.history) {
      std::size_t total = 0;
      for (std::size_t n : stats.positives_per_class) total += n;
      std::size_t expected = 0;
      for (const ImageRecord& image : d.images) {
        if (!image.image_labels.empty()) expected += image.forest.nodes.size();
      }
      CHECK(total == expected);
      CHECK(stats.ws_loss_at_init >= 0.0);
    }
  }
  SUBCASE("the final assignment is a fixed point of relabel") {
    REQUIRE(result.history.back().fixed_point);
    const LatentAssignment again = relabel(d, result.models, result.assignment);
    CHECK(again.positives == result.assignment.positives);
  }
  SUBCASE("latent labels recover the hidden region majorities") {
    std::map<std::pair<ImageId, RegionId>, ClassId> assigned;
    for (ClassId c = 0; c < d.class_count; ++c) {
      for (const auto& ref : result.assignment.positives[c]) {
        CHECK(assigned.count(ref) == 0);  // each region belongs to one class
        assigned[ref] = c;
      }
    }
    std::size_t total = 0;
    std::size_t agree = 0;
    for (const auto& [ref, cls] : assigned) {
      ++total;
      if (region_majority(full.images[ref.first], ref.second, d.class_count) == cls) ++agree;
    }
    REQUIRE(total > 0);
    CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.9);
  }
}

TEST_CASE("alternation input validation") {
  const Dataset full = generate_synthetic(SyntheticConfig{});
  TrainOptions options;
  CHECK_THROWS_AS(alternate_train(full, 3, options), Error);
  const Dataset weak = strip_to_weak(full);
  CHECK_THROWS_AS(alternate_train(weak, 0, options), Error);
}

TEST_CASE("assignment snapshots serialize one class per line") {
  LatentAssignment a;
  a.positives = {{{0, 1}, {2, 3}}, {}};
  a.negatives = {{}, {{1, 0}}};
  TempDir dir("assign");
  save_assignment(a, dir.file("a.jsonl"));

  std::istringstream in(read_file(dir.file("a.jsonl")));
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(nlohmann::json::parse(line));
  }
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].at("class_id") == 0);
  CHECK(lines[0].at("positives") == nlohmann::json::parse("[[0,1],[2,3]]"));
  CHECK(lines[1].at("class_id") == 1);
  CHECK(lines[1].at("positives") == nlohmann::json::parse("[]"));
}
