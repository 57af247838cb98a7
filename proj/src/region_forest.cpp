#include "regioncal/region_forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stack>

#include "regioncal/dataset.hpp"

namespace regioncal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Candidate {
  double score = kNegInf;
  ClassId label = kInvalidClass;
};

// Best calibrated (score, class) of one region; lowest class wins ties
// because only strictly greater scores displace the running best. Raw -inf
// (untrainable class) maps to calibrated 0, the infimum of the sigmoid.
Candidate region_best(const ScoreMatrix& scores, const CalibrationParams& params, RegionId r) {
  Candidate best;
  const std::size_t classes = scores.classes();
  for (std::size_t c = 0; c < classes; ++c) {
    const double raw = scores.at(r, c);
    const double cal =
        std::isinf(raw) && raw < 0.0 ? 0.0 : sigmoid(raw, params.a[c], params.b[c]);
    if (cal > best.score) {
      best.score = cal;
      best.label = static_cast<ClassId>(c);
    }
  }
  return best;
}

}  // namespace

void recompute_forest_caches(RegionForest& forest, const std::vector<std::uint64_t>& superpixel_pixels) {
  const std::size_t n = forest.nodes.size();
  for (std::size_t r = 0; r < n; ++r) {
    if (forest.nodes[r].id != r) fail("validation", "forest node ids must be dense and in order");
  }
  std::vector<int> state(n, 0);  // 0 = new, 1 = in progress, 2 = done
  // Post-order over all trees; shared leaves are computed once.
  std::stack<std::pair<RegionId, std::size_t>> stack;
  auto compute = [&](RegionId start) {
    if (state[start] == 2) return;
    stack.emplace(start, 0);
    state[start] = 1;
    while (!stack.empty()) {
      auto& [r, next_child] = stack.top();
      RegionNode& node = forest.nodes[r];
      if (node.is_leaf()) {
        if (node.leaf_link >= superpixel_pixels.size())
          fail("validation", "leaf region " + std::to_string(r) + " links to unknown superpixel " +
                                 std::to_string(node.leaf_link));
        node.superpixels = {node.leaf_link};
        node.pixel_count = superpixel_pixels[node.leaf_link];
        state[r] = 2;
        stack.pop();
        continue;
      }
      if (next_child < node.children.size()) {
        const RegionId child = node.children[next_child];
        ++next_child;
        if (child >= n) fail("validation", "region " + std::to_string(r) + " has out-of-range child");
        if (state[child] == 1) fail("validation", "cycle through region " + std::to_string(child));
        if (state[child] == 0) {
          state[child] = 1;
          stack.emplace(child, 0);
        }
        continue;
      }
      node.superpixels.clear();
      node.pixel_count = 0;
      for (RegionId child : node.children) {
        const RegionNode& cn = forest.nodes[child];
        node.superpixels.insert(node.superpixels.end(), cn.superpixels.begin(), cn.superpixels.end());
        node.pixel_count += cn.pixel_count;
      }
      std::sort(node.superpixels.begin(), node.superpixels.end());
      state[r] = 2;
      stack.pop();
    }
  };
  for (RegionId root : forest.roots) {
    if (root >= n) fail("validation", "forest root id out of range");
    compute(root);
  }
  // Orphan nodes still get caches so validation can report on them.
  for (std::size_t r = 0; r < n; ++r) {
    if (state[r] == 0) compute(static_cast<RegionId>(r));
  }
}

std::vector<std::string> validate_forest(const RegionForest& forest, const ImageRecord& image) {
  std::vector<std::string> violations;
  auto report = [&](const std::string& msg) { violations.push_back(msg); };

  const std::size_t n = forest.nodes.size();
  const std::size_t sp_count = image.superpixels.size();
  for (std::size_t r = 0; r < n; ++r) {
    if (forest.nodes[r].id != r) report("node at index " + std::to_string(r) + " has id " + std::to_string(forest.nodes[r].id));
  }
  if (forest.roots.empty()) report("forest has no roots");
  for (RegionId root : forest.roots) {
    if (root >= n) {
      report("root " + std::to_string(root) + " out of range");
      return violations;  // structural damage, traversals below would be unsafe
    }
  }

  // Per-node local checks.
  for (std::size_t r = 0; r < n; ++r) {
    const RegionNode& node = forest.nodes[r];
    if (node.is_leaf()) {
      if (node.leaf_link >= sp_count) {
        report("leaf " + std::to_string(r) + " links to unknown superpixel " + std::to_string(node.leaf_link));
        continue;
      }
      if (node.superpixels != std::vector<SuperpixelId>{node.leaf_link})
        report("leaf " + std::to_string(r) + " cached superpixel set is not exactly its link");
      if (node.pixel_count != image.superpixels[node.leaf_link].pixel_count)
        report("leaf " + std::to_string(r) + " pixel count disagrees with its superpixel");
    } else {
      std::uint64_t sum = 0;
      std::vector<SuperpixelId> merged;
      bool child_ok = true;
      for (RegionId child : node.children) {
        if (child >= n) {
          report("region " + std::to_string(r) + " has out-of-range child " + std::to_string(child));
          child_ok = false;
          continue;
        }
        sum += forest.nodes[child].pixel_count;
        merged.insert(merged.end(), forest.nodes[child].superpixels.begin(),
                      forest.nodes[child].superpixels.end());
      }
      if (!child_ok) continue;
      if (sum != node.pixel_count)
        report("region " + std::to_string(r) + " pixel count " + std::to_string(node.pixel_count) +
               " != sum of children " + std::to_string(sum));
      std::sort(merged.begin(), merged.end());
      if (std::adjacent_find(merged.begin(), merged.end()) != merged.end())
        report("region " + std::to_string(r) + " children overlap (not a disjoint union)");
      if (merged != node.superpixels)
        report("region " + std::to_string(r) + " cached superpixel set != union of children");
    }
  }

  // Tree-level checks: reachability, single parent per tree, leaf bijection,
  // internal nodes not shared between trees.
  std::vector<RegionId> owner(n, kInvalidClass);
  for (std::size_t t = 0; t < forest.roots.size(); ++t) {
    std::vector<char> seen(n, 0);
    std::vector<char> has_parent(n, 0);
    std::vector<RegionId> order;
    std::vector<RegionId> stack{forest.roots[t]};
    seen[forest.roots[t]] = 1;
    bool cycle = false;
    while (!stack.empty() && !cycle) {
      RegionId r = stack.back();
      stack.pop_back();
      order.push_back(r);
      if (order.size() > n) {
        cycle = true;
        break;
      }
      for (RegionId child : forest.nodes[r].children) {
        if (child >= n) continue;
        if (has_parent[child])
          report("tree " + std::to_string(t) + ": node " + std::to_string(child) +
                 " has more than one parent");
        has_parent[child] = 1;
        if (!seen[child]) {
          seen[child] = 1;
          stack.push_back(child);
        } else if (!forest.nodes[child].is_leaf()) {
          // Revisiting a non-leaf within one tree means a diamond or cycle.
          report("tree " + std::to_string(t) + ": internal node " + std::to_string(child) +
                 " reached twice");
        }
      }
    }
    if (cycle) {
      report("tree " + std::to_string(t) + " contains a cycle");
      continue;
    }
    std::vector<char> leaf_seen(sp_count, 0);
    for (RegionId r : order) {
      const RegionNode& node = forest.nodes[r];
      if (node.is_leaf()) {
        if (node.leaf_link < sp_count) {
          if (leaf_seen[node.leaf_link])
            report("tree " + std::to_string(t) + ": superpixel " + std::to_string(node.leaf_link) +
                   " covered by two leaves");
          leaf_seen[node.leaf_link] = 1;
        }
      } else {
        if (owner[r] != kInvalidClass && owner[r] != t)
          report("internal node " + std::to_string(r) + " shared between trees " +
                 std::to_string(owner[r]) + " and " + std::to_string(t));
        owner[r] = static_cast<RegionId>(t);
      }
    }
    for (std::size_t s = 0; s < sp_count; ++s) {
      if (!leaf_seen[s])
        report("tree " + std::to_string(t) + ": superpixel " + std::to_string(s) +
               " not reachable from root");
    }
  }

  // Orphans: regions not reachable from any root.
  std::vector<char> reachable(n, 0);
  std::vector<RegionId> stack(forest.roots.begin(), forest.roots.end());
  for (RegionId r : forest.roots) reachable[r] = 1;
  while (!stack.empty()) {
    RegionId r = stack.back();
    stack.pop_back();
    for (RegionId child : forest.nodes[r].children) {
      if (child < n && !reachable[child]) {
        reachable[child] = 1;
        stack.push_back(child);
      }
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (!reachable[r]) report("region " + std::to_string(r) + " not reachable from any root");
  }

  return violations;
}

Labeling label_image_fast(const RegionForest& forest, const ScoreMatrix& scores,
                          const CalibrationParams& params) {
  std::size_t sp_count = 0;
  for (const auto& node : forest.nodes) {
    if (node.is_leaf()) sp_count = std::max<std::size_t>(sp_count, node.leaf_link + 1);
  }
  std::vector<Candidate> final_best(sp_count);

  // One pass per tree: parent's incumbent is installed before the node's own
  // scores, so ties keep the larger region; later trees only displace leaf
  // results on strictly greater scores.
  std::stack<std::pair<RegionId, Candidate>> stack;
  for (RegionId root : forest.roots) {
    stack.emplace(root, Candidate{});
    while (!stack.empty()) {
      auto [r, incumbent] = stack.top();
      stack.pop();
      const Candidate own = region_best(scores, params, r);
      if (own.score > incumbent.score) incumbent = own;
      const RegionNode& node = forest.nodes[r];
      if (node.is_leaf()) {
        Candidate& leaf = final_best[node.leaf_link];
        if (incumbent.score > leaf.score) leaf = incumbent;
      } else {
        for (RegionId child : node.children) stack.emplace(child, incumbent);
      }
    }
  }

  Labeling labeling(sp_count);
  for (std::size_t s = 0; s < sp_count; ++s) labeling[s] = final_best[s].label;
  return labeling;
}

Labeling label_image_naive(const RegionForest& forest, const ScoreMatrix& scores,
                           const CalibrationParams& params) {
  std::size_t sp_count = 0;
  for (const auto& node : forest.nodes) {
    if (node.is_leaf()) sp_count = std::max<std::size_t>(sp_count, node.leaf_link + 1);
  }

  // Candidate order per tree: breadth-first from the root, so regions
  // containing a superpixel are met largest-first (they form a nested chain
  // within one tree). This realizes the same tie rule as the fast path.
  std::vector<std::vector<RegionId>> tree_orders;
  tree_orders.reserve(forest.roots.size());
  for (RegionId root : forest.roots) {
    std::vector<RegionId> order;
    std::size_t head = 0;
    order.push_back(root);
    while (head < order.size()) {
      const RegionId r = order[head++];
      for (RegionId child : forest.nodes[r].children) order.push_back(child);
    }
    tree_orders.push_back(std::move(order));
  }

  const std::size_t classes = scores.classes();
  Labeling labeling(sp_count, kInvalidClass);
  for (SuperpixelId sp = 0; sp < sp_count; ++sp) {
    double best_score = kNegInf;
    ClassId best_label = kInvalidClass;
    for (const auto& order : tree_orders) {
      for (RegionId r : order) {
        const auto& set = forest.nodes[r].superpixels;
        if (!std::binary_search(set.begin(), set.end(), sp)) continue;
        for (std::size_t c = 0; c < classes; ++c) {
          const double raw = scores.at(r, c);
          const double cal =
              std::isinf(raw) && raw < 0.0 ? 0.0 : sigmoid(raw, params.a[c], params.b[c]);
          if (cal > best_score) {
            best_score = cal;
            best_label = static_cast<ClassId>(c);
          }
        }
      }
    }
    labeling[sp] = best_label;
  }
  return labeling;
}

std::vector<RegionId> regions_containing(const RegionForest& forest, SuperpixelId sp) {
  bool known = false;
  for (const auto& node : forest.nodes) {
    if (node.is_leaf() && node.leaf_link == sp) {
      known = true;
      break;
    }
  }
  if (!known) fail("validation", "unknown superpixel " + std::to_string(sp));

  std::set<RegionId> result;
  // Parent chains per tree.
  for (RegionId root : forest.roots) {
    std::vector<RegionId> parent(forest.nodes.size(), kInvalidClass);
    std::vector<RegionId> stack{root};
    RegionId leaf = kInvalidClass;
    while (!stack.empty()) {
      const RegionId r = stack.back();
      stack.pop_back();
      const RegionNode& node = forest.nodes[r];
      if (node.is_leaf()) {
        if (node.leaf_link == sp) leaf = r;
        continue;
      }
      for (RegionId child : node.children) {
        parent[child] = r;
        stack.push_back(child);
      }
    }
    if (leaf == kInvalidClass) continue;
    for (RegionId r = leaf; r != kInvalidClass; r = parent[r]) result.insert(r);
  }
  return {result.begin(), result.end()};
}

}  // namespace regioncal
