#include "regioncal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace regioncal {

namespace {

void validate_config(const SyntheticConfig& cfg) {
  if (cfg.class_count < 2) fail("config", "class_count must be >= 2");
  if (cfg.superpixels_per_image < 2) fail("config", "superpixels_per_image must be >= 2");
  if (cfg.images == 0) fail("config", "images must be positive");
  if (cfg.hierarchy_count == 0) fail("config", "hierarchy_count must be positive");
  if (cfg.imbalance_exponent < 0.0) fail("config", "imbalance_exponent must be >= 0");
  if (cfg.cluster_separation <= 0.0) fail("config", "cluster_separation must be positive");
  if (cfg.noise_sigma < 0.0) fail("config", "noise_sigma must be >= 0");
  if (cfg.mix_fraction < 0.0 || cfg.mix_fraction >= 1.0) fail("config", "mix_fraction must be in [0, 1)");
  if (cfg.feature_dim != 0 && cfg.feature_dim < cfg.class_count)
    fail("config", "feature_dim must be >= class_count (class means sit on a simplex)");
}

// One bottom-up merge tree over the shared leaves [0, S). Leaves occupy node
// ids 0..S-1; internal nodes are appended to forest.nodes. Merges join
// adjacent runs of the 1-D superpixel layout, so every region is connected.
RegionId build_tree(RegionForest& forest, std::size_t sp_count, std::mt19937_64& rng) {
  std::vector<RegionId> active(sp_count);
  std::iota(active.begin(), active.end(), 0u);
  std::bernoulli_distribution triple(0.25);
  while (active.size() > 1) {
    std::size_t arity = (active.size() >= 3 && triple(rng)) ? 3 : 2;
    arity = std::min(arity, active.size());
    std::uniform_int_distribution<std::size_t> pick(0, active.size() - arity);
    const std::size_t j = pick(rng);
    RegionNode node;
    node.id = static_cast<RegionId>(forest.nodes.size());
    node.children.assign(active.begin() + static_cast<std::ptrdiff_t>(j),
                         active.begin() + static_cast<std::ptrdiff_t>(j + arity));
    forest.nodes.push_back(node);
    active[j] = node.id;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(j + 1),
                 active.begin() + static_cast<std::ptrdiff_t>(j + arity));
  }
  return active.front();
}

FeatureVector mixed_feature(const std::vector<double>& class_mass, double total_mass,
                            std::size_t feature_dim, double center_coord,
                            double noise_sigma, std::mt19937_64& rng) {
  FeatureVector feature(feature_dim, 0.0);
  for (std::size_t c = 0; c < class_mass.size(); ++c) {
    if (class_mass[c] > 0.0) feature[c] = class_mass[c] / total_mass * center_coord;
  }
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (double& v : feature) v += noise(rng);
  }
  return feature;
}

std::vector<double> region_class_mass(const ImageRecord& image, const std::vector<SuperpixelId>& sps,
                                      std::size_t class_count) {
  std::vector<double> mass(class_count, 0.0);
  for (SuperpixelId s : sps) {
    for (const auto& [cls, count] : image.superpixels[s].gt_histogram)
      mass[cls] += static_cast<double>(count);
  }
  return mass;
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  validate_config(cfg);
  const std::size_t C = cfg.class_count;
  const std::size_t D = cfg.feature_dim == 0 ? std::max<std::size_t>(C, 8) : cfg.feature_dim;
  std::mt19937_64 rng(cfg.seed);

  // Class means on a scaled simplex: pairwise distance == cluster_separation.
  const double center_coord = cfg.cluster_separation / std::sqrt(2.0);

  std::vector<double> power_law(C);
  double power_law_total = 0.0;
  for (std::size_t k = 0; k < C; ++k) {
    power_law[k] = std::pow(static_cast<double>(k + 1), -cfg.imbalance_exponent);
    power_law_total += power_law[k];
  }
  std::uniform_int_distribution<std::uint64_t> draw_pixels(50, 150);
  std::uniform_real_distribution<double> draw_mix(0.0, cfg.mix_fraction);

  // Each image shows 1-3 "theme" classes; all its superpixels draw from
  // them. Theme slots are apportioned to classes in exact power-law
  // proportion (largest remainder) and dealt out shuffled, so the marginal
  // class distribution follows the power law while any given class is
  // absent from most images - which is what gives every one-vs-all
  // classifier its negative images.
  std::uniform_int_distribution<std::size_t> draw_theme_count(1, 3);
  std::vector<std::size_t> themes_per_image(cfg.images);
  std::size_t slot_count = 0;
  for (std::size_t i = 0; i < cfg.images; ++i) {
    themes_per_image[i] = draw_theme_count(rng);
    slot_count += themes_per_image[i];
  }
  std::vector<ClassId> slots;
  slots.reserve(slot_count);
  {
    std::vector<std::pair<double, ClassId>> remainders;
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < C; ++k) {
      const double exact = static_cast<double>(slot_count) * power_law[k] / power_law_total;
      const auto whole = static_cast<std::size_t>(exact);
      slots.insert(slots.end(), whole, static_cast<ClassId>(k));
      assigned += whole;
      remainders.emplace_back(-(exact - static_cast<double>(whole)), static_cast<ClassId>(k));
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t k = 0; assigned < slot_count; ++k, ++assigned)
      slots.push_back(remainders[k % remainders.size()].second);
    std::shuffle(slots.begin(), slots.end(), rng);
  }

  Dataset d;
  d.class_count = C;
  d.feature_dim = D;
  d.supervision = Supervision::kFull;
  d.images.reserve(cfg.images);

  std::size_t next_slot = 0;
  for (std::size_t i = 0; i < cfg.images; ++i) {
    ImageRecord image;
    image.id = static_cast<ImageId>(i);
    const std::size_t S = cfg.superpixels_per_image;

    const std::size_t theme_count = themes_per_image[i];
    const std::vector<ClassId> themes(slots.begin() + static_cast<std::ptrdiff_t>(next_slot),
                                      slots.begin() +
                                          static_cast<std::ptrdiff_t>(next_slot + theme_count));
    next_slot += theme_count;
    std::uniform_int_distribution<std::size_t> draw_theme(0, theme_count - 1);

    for (std::size_t s = 0; s < S; ++s) {
      Superpixel sp;
      sp.id = static_cast<SuperpixelId>(s);
      sp.pixel_count = draw_pixels(rng);
      const ClassId dominant = themes[draw_theme(rng)];
      const ClassId minor = themes[draw_theme(rng)];
      const double mix = cfg.mix_fraction > 0.0 ? draw_mix(rng) : 0.0;
      std::uint64_t minor_px = 0;
      if (minor != dominant)
        minor_px = static_cast<std::uint64_t>(static_cast<double>(sp.pixel_count) * mix);
      if (minor_px > 0 && minor < dominant) {
        sp.gt_histogram = {{minor, minor_px}, {dominant, sp.pixel_count - minor_px}};
      } else if (minor_px > 0) {
        sp.gt_histogram = {{dominant, sp.pixel_count - minor_px}, {minor, minor_px}};
      } else {
        sp.gt_histogram = {{dominant, sp.pixel_count}};
      }
      image.superpixels.push_back(std::move(sp));
    }

    // Shared leaves, then one merge tree per hierarchy.
    for (std::size_t s = 0; s < S; ++s) {
      RegionNode leaf;
      leaf.id = static_cast<RegionId>(s);
      leaf.leaf_link = static_cast<SuperpixelId>(s);
      image.forest.nodes.push_back(leaf);
    }
    for (std::size_t t = 0; t < cfg.hierarchy_count; ++t)
      image.forest.roots.push_back(build_tree(image.forest, S, rng));

    std::vector<std::uint64_t> sp_pixels(S);
    for (std::size_t s = 0; s < S; ++s) sp_pixels[s] = image.superpixels[s].pixel_count;
    recompute_forest_caches(image.forest, sp_pixels);

    image.region_features.resize(image.forest.nodes.size());
    for (const RegionNode& node : image.forest.nodes) {
      const auto mass = region_class_mass(image, node.superpixels, C);
      const double total = static_cast<double>(node.pixel_count);
      image.region_features[node.id] = mixed_feature(mass, total, D, center_coord, cfg.noise_sigma, rng);
    }

    for (const auto& [cls, sps] : gt_regions(image)) {
      const auto mass = region_class_mass(image, sps, C);
      std::uint64_t total = 0;
      for (SuperpixelId s : sps) total += image.superpixels[s].pixel_count;
      image.gt_region_features[cls] =
          mixed_feature(mass, static_cast<double>(total), D, center_coord, cfg.noise_sigma, rng);
    }

    std::set<ClassId> present;
    for (const auto& sp : image.superpixels) {
      for (const auto& [cls, count] : sp.gt_histogram) {
        if (count > 0) present.insert(cls);
      }
    }
    image.image_labels.assign(present.begin(), present.end());

    d.images.push_back(std::move(image));
  }
  return d;
}

Dataset strip_to_weak(Dataset d) {
  for (ImageRecord& image : d.images) {
    for (Superpixel& sp : image.superpixels) sp.gt_histogram.clear();
    image.gt_region_features.clear();
  }
  d.supervision = Supervision::kWeak;
  return d;
}

double iou(const std::vector<SuperpixelId>& a, const std::vector<SuperpixelId>& b,
           const ImageRecord& image) {
  if (a.empty() && b.empty()) fail("validation", "IoU of two empty superpixel sets is undefined");
  const std::size_t sp_count = image.superpixels.size();
  auto as_set = [&](const std::vector<SuperpixelId>& v) {
    std::set<SuperpixelId> set(v.begin(), v.end());
    for (SuperpixelId s : set) {
      if (s >= sp_count)
        fail("validation", "IoU references unknown superpixel " + std::to_string(s));
    }
    return set;
  };
  const auto sa = as_set(a);
  const auto sb = as_set(b);
  std::uint64_t inter = 0;
  std::uint64_t uni = 0;
  for (SuperpixelId s : sa) {
    const std::uint64_t px = image.superpixels[s].pixel_count;
    uni += px;
    if (sb.count(s)) inter += px;
  }
  for (SuperpixelId s : sb) {
    if (!sa.count(s)) uni += image.superpixels[s].pixel_count;
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint64_t> class_pixel_counts(const Dataset& d) {
  if (d.supervision != Supervision::kFull)
    fail("supervision", "class_pixel_counts requires a fully supervised dataset");
  std::vector<std::uint64_t> counts(d.class_count, 0);
  for (const ImageRecord& image : d.images) {
    for (const Superpixel& sp : image.superpixels) {
      for (const auto& [cls, count] : sp.gt_histogram) counts[cls] += count;
    }
  }
  return counts;
}

ClassId superpixel_majority_class(const Superpixel& sp) {
  ClassId best = kInvalidClass;
  std::uint64_t best_count = 0;
  for (const auto& [cls, count] : sp.gt_histogram) {
    if (count > best_count) {
      best = cls;
      best_count = count;
    }
  }
  // Histograms are sorted by class, so the first maximum (lowest class) wins.
  return best;
}

std::vector<std::pair<ClassId, std::vector<SuperpixelId>>> gt_regions(const ImageRecord& image) {
  std::map<ClassId, std::vector<SuperpixelId>> by_class;
  for (const Superpixel& sp : image.superpixels) {
    const ClassId cls = superpixel_majority_class(sp);
    if (cls != kInvalidClass) by_class[cls].push_back(sp.id);
  }
  return {by_class.begin(), by_class.end()};
}

std::string to_string(Supervision s) {
  return s == Supervision::kFull ? "full" : "weak";
}

std::vector<std::string> validate_dataset(const Dataset& d) {
  std::vector<std::string> violations;
  auto report = [&](const std::string& msg) { violations.push_back(msg); };
  if (d.class_count == 0) report("class_count must be positive");
  if (d.feature_dim == 0) report("feature_dim must be positive");

  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const ImageRecord& image = d.images[i];
    const std::string where = "image " + std::to_string(image.id) + ": ";
    if (image.id != i) report(where + "image ids must be dense and in order");

    std::set<ClassId> present;
    for (std::size_t s = 0; s < image.superpixels.size(); ++s) {
      const Superpixel& sp = image.superpixels[s];
      if (sp.id != s) report(where + "superpixel ids must be dense and in order");
      if (sp.pixel_count == 0) report(where + "superpixel " + std::to_string(s) + " has zero pixels");
      std::uint64_t sum = 0;
      ClassId prev = 0;
      bool first = true;
      for (const auto& [cls, count] : sp.gt_histogram) {
        if (cls >= d.class_count)
          report(where + "superpixel " + std::to_string(s) + " references class " + std::to_string(cls));
        if (!first && cls <= prev)
          report(where + "superpixel " + std::to_string(s) + " histogram not sorted by class");
        if (count == 0)
          report(where + "superpixel " + std::to_string(s) + " histogram has a zero count");
        prev = cls;
        first = false;
        sum += count;
        if (count > 0) present.insert(cls);
      }
      if (d.supervision == Supervision::kFull) {
        if (sum != sp.pixel_count)
          report(where + "superpixel " + std::to_string(s) + " histogram mass " + std::to_string(sum) +
                 " != pixel count " + std::to_string(sp.pixel_count));
      } else if (!sp.gt_histogram.empty()) {
        report(where + "weak dataset carries a superpixel histogram");
      }
    }

    for (ClassId cls : image.image_labels) {
      if (cls >= d.class_count) report(where + "image label " + std::to_string(cls) + " out of range");
    }
    if (!std::is_sorted(image.image_labels.begin(), image.image_labels.end()) ||
        std::adjacent_find(image.image_labels.begin(), image.image_labels.end()) !=
            image.image_labels.end())
      report(where + "image labels must be sorted and unique");
    if (d.supervision == Supervision::kFull) {
      std::vector<ClassId> expect(present.begin(), present.end());
      if (expect != image.image_labels)
        report(where + "image labels disagree with classes present in ground truth");
    }

    for (const auto& msg : validate_forest(image.forest, image)) report(where + msg);

    if (image.region_features.size() != image.forest.nodes.size())
      report(where + "region feature table size != region count");
    for (std::size_t r = 0; r < image.region_features.size(); ++r) {
      const FeatureVector& f = image.region_features[r];
      if (f.empty()) continue;  // absent, may arrive via sidecar
      if (f.size() != d.feature_dim)
        report(where + "region " + std::to_string(r) + " feature dimension " +
               std::to_string(f.size()) + " != " + std::to_string(d.feature_dim));
      for (double v : f) {
        if (!std::isfinite(v)) {
          report(where + "region " + std::to_string(r) + " feature has a non-finite value");
          break;
        }
      }
    }
    for (const auto& [cls, f] : image.gt_region_features) {
      if (cls >= d.class_count)
        report(where + "ground-truth region feature references class " + std::to_string(cls));
      if (f.size() != d.feature_dim)
        report(where + "ground-truth region feature for class " + std::to_string(cls) +
               " has wrong dimension");
    }
  }
  return violations;
}

}  // namespace regioncal
