#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "regioncal/dataset.hpp"
#include "test_util.hpp"

using namespace regioncal;
using namespace regioncal::testing;

namespace {

SyntheticConfig small_config() {
  SyntheticConfig config;
  config.class_count = 3;
  config.images = 4;
  config.superpixels_per_image = 6;
  config.hierarchy_count = 2;
  config.seed = 11;
  return config;
}

std::string error_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("generator rejects invalid configurations") {
  SyntheticConfig config = small_config();
  SUBCASE("one class") {
    config.class_count = 1;
    CHECK_THROWS_AS(generate_synthetic(config), Error);
  }
  SUBCASE("one superpixel") {
    config.superpixels_per_image = 1;
    CHECK_THROWS_AS(generate_synthetic(config), Error);
  }
  SUBCASE("no images") {
    config.images = 0;
    CHECK_THROWS_AS(generate_synthetic(config), Error);
  }
  SUBCASE("feature dim below class count") {
    config.feature_dim = 2;  // class_count is 3
    CHECK_THROWS_AS(generate_synthetic(config), Error);
  }
  SUBCASE("mix fraction of one") {
    config.mix_fraction = 1.0;
    CHECK_THROWS_AS(generate_synthetic(config), Error);
  }
  SUBCASE("negative imbalance exponent") {
    config.imbalance_exponent = -0.5;
    CHECK_THROWS_AS(generate_synthetic(config), Error);
  }
  SUBCASE("error kind is config") {
    config.class_count = 0;
    try {
      generate_synthetic(config);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == "config");
    }
  }
}

TEST_CASE("generated datasets satisfy every structural invariant") {
  SyntheticConfig config;
  config.class_count = 2;
  config.images = 1;
  config.superpixels_per_image = 4;
  config.seed = 7;
  const Dataset d = generate_synthetic(config);

  CHECK(d.class_count == 2);
  CHECK(d.feature_dim == 8);  // auto: max(class_count, 8)
  CHECK(d.supervision == Supervision::kFull);
  REQUIRE(d.images.size() == 1);
  const ImageRecord& image = d.images[0];
  REQUIRE(image.superpixels.size() == 4);
  for (SuperpixelId s = 0; s < 4; ++s) {
    CHECK(image.superpixels[s].id == s);
    CHECK(image.superpixels[s].pixel_count > 0);
    // Leaves come first and mirror the superpixel ids.
    CHECK(image.forest.nodes[s].is_leaf());
    CHECK(image.forest.nodes[s].leaf_link == s);
  }
  CHECK(image.forest.roots.size() == config.hierarchy_count);
  for (const FeatureVector& f : image.region_features) CHECK(f.size() == d.feature_dim);
  CHECK(validate_dataset(d).empty());

  SUBCASE("histogram mass equals pixel mass") {
    for (const Superpixel& sp : image.superpixels) {
      std::uint64_t mass = 0;
      for (const auto& [cls, count] : sp.gt_histogram) mass += count;
      CHECK(mass == sp.pixel_count);
    }
  }
  SUBCASE("image labels are exactly the classes present") {
    std::vector<char> present(d.class_count, 0);
    for (const Superpixel& sp : image.superpixels) {
      for (const auto& [cls, count] : sp.gt_histogram) present[cls] = 1;
    }
    std::vector<ClassId> expected;
    for (ClassId c = 0; c < d.class_count; ++c) {
      if (present[c]) expected.push_back(c);
    }
    CHECK(image.image_labels == expected);
  }
  SUBCASE("ground-truth region features exist for each present class") {
    for (const auto& [cls, sps] : gt_regions(image)) {
      REQUIRE(image.gt_region_features.count(cls) == 1);
      CHECK(image.gt_region_features.at(cls).size() == d.feature_dim);
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const SyntheticConfig config = small_config();
  const Dataset a = generate_synthetic(config);
  const Dataset b = generate_synthetic(config);
  CHECK(a == b);

  TempDir dir("dataset_det");
  save_dataset(a, dir.file("a.rds.jsonl"));
  save_dataset(b, dir.file("b.rds.jsonl"));
  CHECK(read_file(dir.file("a.rds.jsonl")) == read_file(dir.file("b.rds.jsonl")));

  SyntheticConfig other = config;
  other.seed = 12;
  CHECK_FALSE(generate_synthetic(other) == a);
}

TEST_CASE("class pixel frequencies follow the configured power law") {
  SyntheticConfig config;
  config.class_count = 5;
  config.images = 200;
  config.superpixels_per_image = 12;
  config.imbalance_exponent = 1.5;
  config.seed = 3;
  const Dataset d = generate_synthetic(config);
  const auto counts = class_pixel_counts(d);
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));

  double norm = 0.0;
  for (std::size_t k = 0; k < config.class_count; ++k) norm += std::pow(k + 1.0, -1.5);
  for (std::size_t k = 0; k < config.class_count; ++k) {
    const double expected = std::pow(k + 1.0, -1.5) / norm;
    const double observed = static_cast<double>(counts[k]) / total;
    CHECK(std::abs(observed - expected) / expected < 0.10);
  }
}

TEST_CASE("every class owns positive and negative images under moderate imbalance") {
  SyntheticConfig config;
  config.class_count = 8;
  config.images = 32;
  config.imbalance_exponent = 1.0;
  config.seed = 5;
  const Dataset d = generate_synthetic(config);
  for (ClassId c = 0; c < d.class_count; ++c) {
    std::size_t with = 0;
    for (const ImageRecord& image : d.images) {
      if (std::binary_search(image.image_labels.begin(), image.image_labels.end(), c)) ++with;
    }
    CHECK(with > 0);
    CHECK(with < d.images.size());
  }
}

TEST_CASE("save then load reproduces the dataset exactly") {
  TempDir dir("dataset_rt");
  SUBCASE("fully supervised") {
    const Dataset d = generate_synthetic(small_config());
    save_dataset(d, dir.file("d.rds.jsonl"));
    CHECK(load_dataset(dir.file("d.rds.jsonl")) == d);
  }
  SUBCASE("weakly supervised") {
    const Dataset d = strip_to_weak(generate_synthetic(small_config()));
    save_dataset(d, dir.file("w.rds.jsonl"));
    CHECK(load_dataset(dir.file("w.rds.jsonl")) == d);
  }
  SUBCASE("empty image list") {
    Dataset d;
    d.class_count = 4;
    d.feature_dim = 8;
    save_dataset(d, dir.file("empty.rds.jsonl"));
    const Dataset back = load_dataset(dir.file("empty.rds.jsonl"));
    CHECK(back.images.empty());
    CHECK(back.class_count == 4);
  }
}

TEST_CASE("loading rejects malformed and invalid files") {
  TempDir dir("dataset_bad");
  const std::string header = R"({"version":1,"class_count":2,"feature_dim":2,"supervision":"full"})";

  SUBCASE("dangling superpixel reference") {
    const std::string image =
        R"({"id":0,"superpixels":[{"id":0,"pixels":5,"gt":[[0,5]]},{"id":1,"pixels":3,"gt":[[1,3]]}],)"
        R"("forest":{"roots":[2],"nodes":[{"id":0,"leaf":0},{"id":1,"leaf":99},{"id":2,"children":[0,1]}]},)"
        R"("features":[[0.1,0.2],[0.3,0.4],[0.5,0.6]],"image_labels":[0,1]})";
    write_file(dir.file("bad.rds.jsonl"), header + "\n" + image + "\n");
    const std::string msg = error_message([&] { load_dataset(dir.file("bad.rds.jsonl")); });
    CHECK(msg.find("99") != std::string::npos);
  }
  SUBCASE("histogram mass not equal to pixel count") {
    const std::string image =
        R"({"id":0,"superpixels":[{"id":0,"pixels":5,"gt":[[0,4]]},{"id":1,"pixels":3,"gt":[[1,3]]}],)"
        R"("forest":{"roots":[2],"nodes":[{"id":0,"leaf":0},{"id":1,"leaf":1},{"id":2,"children":[0,1]}]},)"
        R"("features":[[0.1,0.2],[0.3,0.4],[0.5,0.6]],"image_labels":[0,1]})";
    write_file(dir.file("mass.rds.jsonl"), header + "\n" + image + "\n");
    try {
      load_dataset(dir.file("mass.rds.jsonl"));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == "validation");
    }
  }
  SUBCASE("broken json line") {
    write_file(dir.file("broken.rds.jsonl"), header + "\n{not json\n");
    try {
      load_dataset(dir.file("broken.rds.jsonl"));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == "parse");
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_dataset(dir.file("nope.rds.jsonl")), Error);
  }
  SUBCASE("empty file") {
    write_file(dir.file("empty"), "");
    CHECK_THROWS_AS(load_dataset(dir.file("empty")), Error);
  }
}

TEST_CASE("iou is the pixel-weighted overlap ratio") {
  // Superpixels with 10, 10, 20 pixels.
  RegionForest f;
  for (RegionId s = 0; s < 3; ++s) f.nodes.push_back(leaf(s, s));
  f.nodes.push_back(internal(3, {0, 1, 2}));
  f.roots = {3};
  const ImageRecord image = make_image(0, {10, 10, 20}, {{{0, 10}}, {{0, 10}}, {{1, 20}}}, f);

  CHECK(iou({0, 1}, {1, 2}, image) == doctest::Approx(0.25).epsilon(1e-12));  // 10 / 40
  CHECK(iou({0, 1, 2}, {0, 1, 2}, image) == 1.0);
  CHECK(iou({0}, {1, 2}, image) == 0.0);
  CHECK(iou({0, 1}, {1, 2}, image) == iou({1, 2}, {0, 1}, image));
  CHECK_THROWS_AS(iou({}, {}, image), Error);
  CHECK_THROWS_AS(iou({0, 7}, {1}, image), Error);

  SUBCASE("growing a set toward the other never lowers the ratio") {
    std::mt19937_64 rng(17);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<SuperpixelId> a, b;
      for (SuperpixelId s = 0; s < 3; ++s) {
        if (coin(rng)) a.push_back(s);
        if (coin(rng)) b.push_back(s);
      }
      if (a.empty() || b.empty()) continue;
      const double base = iou(a, b, image);
      for (SuperpixelId s : b) {
        if (std::find(a.begin(), a.end(), s) == a.end()) {
          std::vector<SuperpixelId> grown = a;
          grown.push_back(s);
          CHECK(iou(grown, b, image) >= base);
        }
      }
    }
  }
}

TEST_CASE("class_pixel_counts sums histograms across the dataset") {
  const Dataset d = generate_synthetic(small_config());
  std::vector<std::uint64_t> expected(d.class_count, 0);
  for (const ImageRecord& image : d.images) {
    for (const Superpixel& sp : image.superpixels) {
      for (const auto& [cls, count] : sp.gt_histogram) expected[cls] += count;
    }
  }
  CHECK(class_pixel_counts(d) == expected);

  SUBCASE("weakly supervised datasets have no pixel counts") {
    const Dataset weak = strip_to_weak(d);
    try {
      class_pixel_counts(weak);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == "supervision");
    }
  }
}

TEST_CASE("superpixel majority class takes the lowest class on ties") {
  Superpixel sp;
  sp.pixel_count = 10;
  sp.gt_histogram = {{1, 4}, {3, 4}, {4, 2}};
  CHECK(superpixel_majority_class(sp) == 1);
  sp.gt_histogram = {{0, 2}, {2, 8}};
  CHECK(superpixel_majority_class(sp) == 2);
}

TEST_CASE("gt_regions groups superpixels by majority class") {
  RegionForest f;
  for (RegionId s = 0; s < 3; ++s) f.nodes.push_back(leaf(s, s));
  f.nodes.push_back(internal(3, {0, 1, 2}));
  f.roots = {3};
  // sp0 majority 0, sp1 majority 1 (tie 0/1 broken low? no: 6 vs 4 -> 0), sp2 majority 1
  const ImageRecord image =
      make_image(0, {10, 10, 20}, {{{0, 10}}, {{0, 6}, {1, 4}}, {{1, 20}}}, f);
  const auto regions = gt_regions(image);
  REQUIRE(regions.size() == 2);
  CHECK(regions[0].first == 0);
  CHECK(regions[0].second == std::vector<SuperpixelId>{0, 1});
  CHECK(regions[1].first == 1);
  CHECK(regions[1].second == std::vector<SuperpixelId>{2});
}

TEST_CASE("strip_to_weak drops pixel truth but keeps image labels") {
  const Dataset full = generate_synthetic(small_config());
  const Dataset weak = strip_to_weak(full);
  CHECK(weak.supervision == Supervision::kWeak);
  CHECK(weak.class_count == full.class_count);
  REQUIRE(weak.images.size() == full.images.size());
  for (std::size_t i = 0; i < weak.images.size(); ++i) {
    CHECK(weak.images[i].image_labels == full.images[i].image_labels);
    CHECK(weak.images[i].gt_region_features.empty());
    for (const Superpixel& sp : weak.images[i].superpixels) CHECK(sp.gt_histogram.empty());
    CHECK(weak.images[i].region_features == full.images[i].region_features);
  }
  CHECK(validate_dataset(weak).empty());
}

TEST_CASE("feature sidecars overwrite region and ground-truth features") {
  Dataset d = generate_synthetic(small_config());
  TempDir dir("sidecar");
  write_file(dir.file("f.jsonl"),
             R"({"image":0,"region":1,"values":[1,2,3,4,5,6,7,8]})"
             "\n"
             R"({"image":2,"gt_class":0,"values":[8,7,6,5,4,3,2,1]})"
             "\n");
  apply_feature_sidecar(d, dir.file("f.jsonl"));
  CHECK(d.images[0].region_features[1] == FeatureVector{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(d.images[2].gt_region_features.at(0) == FeatureVector{8, 7, 6, 5, 4, 3, 2, 1});

  SUBCASE("wrong dimension is rejected") {
    write_file(dir.file("short.jsonl"), R"({"image":0,"region":1,"values":[1,2]})"
                                        "\n");
    CHECK_THROWS_AS(apply_feature_sidecar(d, dir.file("short.jsonl")), Error);
  }
  SUBCASE("unknown region is rejected") {
    write_file(dir.file("region.jsonl"),
               R"({"image":0,"region":9999,"values":[1,2,3,4,5,6,7,8]})"
               "\n");
    CHECK_THROWS_AS(apply_feature_sidecar(d, dir.file("region.jsonl")), Error);
  }
  SUBCASE("non-finite value is rejected") {
    write_file(dir.file("nan.jsonl"),
               R"({"image":0,"region":1,"values":[1,2,3,4,5,6,7,null]})"
               "\n");
    CHECK_THROWS(apply_feature_sidecar(d, dir.file("nan.jsonl")));
  }
}

TEST_CASE("validate_dataset reports violations with their image") {
  Dataset d = generate_synthetic(small_config());
  SUBCASE("clean dataset") { CHECK(validate_dataset(d).empty()); }
  SUBCASE("zero-pixel superpixel") {
    d.images[1].superpixels[0].pixel_count = 0;
    const auto violations = validate_dataset(d);
    REQUIRE_FALSE(violations.empty());
    CHECK(violations.front().find("image 1") != std::string::npos);
  }
  SUBCASE("unsorted image labels") {
    std::reverse(d.images[0].image_labels.begin(), d.images[0].image_labels.end());
    if (d.images[0].image_labels.size() > 1) CHECK_FALSE(validate_dataset(d).empty());
  }
  SUBCASE("feature with wrong dimension") {
    d.images[0].region_features[0].push_back(0.0);
    CHECK_FALSE(validate_dataset(d).empty());
  }
  SUBCASE("histogram class out of range") {
    auto& hist = d.images[0].superpixels[0].gt_histogram;
    REQUIRE_FALSE(hist.empty());
    hist.back().first = static_cast<ClassId>(d.class_count + 3);
    CHECK_FALSE(validate_dataset(d).empty());
  }
}

TEST_CASE("region features average the covered class centers") {
  // With zero noise the feature of a pure-class region sits exactly on that
  // class center, whose coordinate at dimension c is separation / sqrt(2).
  SyntheticConfig config;
  config.class_count = 2;
  config.images = 6;
  config.superpixels_per_image = 5;
  config.noise_sigma = 0.0;
  config.mix_fraction = 0.0;
  config.cluster_separation = 6.0;
  config.seed = 21;
  const Dataset d = generate_synthetic(config);
  const double coord = 6.0 / std::sqrt(2.0);
  for (const ImageRecord& image : d.images) {
    for (std::size_t s = 0; s < image.superpixels.size(); ++s) {
      const Superpixel& sp = image.superpixels[s];
      REQUIRE(sp.gt_histogram.size() == 1);  // mix_fraction 0: pure superpixels
      const ClassId cls = sp.gt_histogram.front().first;
      const FeatureVector& f = image.region_features[s];  // leaf region s
      for (std::size_t dim = 0; dim < f.size(); ++dim) {
        CHECK(f[dim] == doctest::Approx(dim == cls ? coord : 0.0).epsilon(1e-12));
      }
    }
  }
}
