#include "regioncal/svm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"
#include "regioncal/parallel.hpp"

namespace regioncal {

namespace {

void check_feature(const FeatureVector& f, std::size_t dim) {
  if (f.size() != dim) fail("dimension", "training feature has wrong dimension");
  for (double v : f) {
    if (!std::isfinite(v)) fail("validation", "training feature has a non-finite value");
  }
}

struct Problem {
  Eigen::MatrixXd x;       // n x (d+1), bias column of ones appended
  Eigen::VectorXd y;       // +1 / -1
  Eigen::VectorXd weight;  // per-sample weight
  double reg = 0.0;

  double objective(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd margins =
        Eigen::VectorXd::Ones(y.size()) - y.cwiseProduct(x * w);
    const Eigen::VectorXd active = margins.cwiseMax(0.0);
    return 0.5 * reg * w.squaredNorm() + weight.dot(active.cwiseProduct(active));
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd margins =
        Eigen::VectorXd::Ones(y.size()) - y.cwiseProduct(x * w);
    Eigen::VectorXd coeff = Eigen::VectorXd::Zero(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (margins[i] > 0.0) coeff[i] = -2.0 * weight[i] * margins[i] * y[i];
    }
    return reg * w + x.transpose() * coeff;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd margins =
        Eigen::VectorXd::Ones(y.size()) - y.cwiseProduct(x * w);
    Eigen::MatrixXd h = reg * Eigen::MatrixXd::Identity(x.cols(), x.cols());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (margins[i] > 0.0) h += 2.0 * weight[i] * x.row(i).transpose() * x.row(i);
    }
    return h;
  }
};

// Damped Newton with Armijo backtracking. The squared hinge is convex and
// C^1 with piecewise-linear gradient, so full steps are accepted almost
// always; backtracking guards the active-set changes.
std::vector<double> solve(const Problem& problem, Eigen::VectorXd& w, double tolerance,
                          std::size_t max_epochs) {
  std::vector<double> objective_per_epoch;
  double f = problem.objective(w);
  for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
    objective_per_epoch.push_back(f);
    const Eigen::VectorXd g = problem.gradient(w);
    if (g.lpNorm<Eigen::Infinity>() < tolerance) break;
    Eigen::VectorXd step = problem.hessian(w).llt().solve(-g);
    double directional = g.dot(step);
    if (!step.allFinite() || directional >= 0.0) {
      step = -g;
      directional = g.dot(step);
    }
    double t = 1.0;
    bool accepted = false;
    while (t >= 1e-14) {
      const Eigen::VectorXd candidate = w + t * step;
      const double fc = problem.objective(candidate);
      if (fc <= f + 1e-4 * t * directional) {
        w = candidate;
        f = fc;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no descent at machine precision
  }
  objective_per_epoch.push_back(f);
  return objective_per_epoch;
}

Problem build_problem(const std::vector<FeatureVector>& positives,
                      const std::vector<FeatureVector>& negatives,
                      const std::vector<std::size_t>& negative_subset, double reg_strength) {
  const std::size_t dim = positives.front().size();
  const std::size_t n = positives.size() + negative_subset.size();
  const auto [w_pos, w_neg] = balanced_sample_weights(positives.size(), negatives.size());
  Problem p;
  p.reg = reg_strength;
  p.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim + 1));
  p.y.resize(static_cast<Eigen::Index>(n));
  p.weight.resize(static_cast<Eigen::Index>(n));
  Eigen::Index row = 0;
  for (const FeatureVector& f : positives) {
    for (std::size_t k = 0; k < dim; ++k) p.x(row, static_cast<Eigen::Index>(k)) = f[k];
    p.x(row, static_cast<Eigen::Index>(dim)) = 1.0;
    p.y[row] = 1.0;
    p.weight[row] = w_pos;
    ++row;
  }
  for (std::size_t idx : negative_subset) {
    const FeatureVector& f = negatives[idx];
    for (std::size_t k = 0; k < dim; ++k) p.x(row, static_cast<Eigen::Index>(k)) = f[k];
    p.x(row, static_cast<Eigen::Index>(dim)) = 1.0;
    p.y[row] = -1.0;
    p.weight[row] = w_neg;
    ++row;
  }
  return p;
}

}  // namespace

std::pair<double, double> balanced_sample_weights(std::size_t n_pos, std::size_t n_neg) {
  if (n_pos == 0 || n_neg == 0)
    fail("training", "balanced weights require at least one sample of each sign");
  return {1.0 / (2.0 * static_cast<double>(n_pos)), 1.0 / (2.0 * static_cast<double>(n_neg))};
}

double raw_score(const LinearModel& model, const FeatureVector& feature) {
  if (!model.trainable) return -std::numeric_limits<double>::infinity();
  if (feature.size() + 1 != model.weights.size())
    fail("dimension", "feature dimension does not match model");
  double s = model.weights.back();
  for (std::size_t k = 0; k < feature.size(); ++k) s += model.weights[k] * feature[k];
  return s;
}

double objective(const FeatureVector& weights, const std::vector<FeatureVector>& features,
                 const std::vector<int>& labels, const std::vector<double>& sample_weights,
                 double reg_strength) {
  if (features.size() != labels.size() || features.size() != sample_weights.size())
    fail("dimension", "objective inputs must have matching lengths");
  double reg = 0.0;
  for (double w : weights) reg += w * w;
  double data = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FeatureVector& f = features[i];
    if (f.size() + 1 != weights.size()) fail("dimension", "feature dimension does not match weights");
    double s = weights.back();
    for (std::size_t k = 0; k < f.size(); ++k) s += weights[k] * f[k];
    const double margin = 1.0 - static_cast<double>(labels[i]) * s;
    if (margin > 0.0) data += sample_weights[i] * margin * margin;
  }
  return 0.5 * reg_strength * reg + data;
}

FeatureVector objective_gradient(const FeatureVector& weights,
                                       const std::vector<FeatureVector>& features,
                                       const std::vector<int>& labels,
                                       const std::vector<double>& sample_weights,
                                       double reg_strength) {
  if (features.size() != labels.size() || features.size() != sample_weights.size())
    fail("dimension", "gradient inputs must have matching lengths");
  FeatureVector grad(weights.size());
  for (std::size_t k = 0; k < weights.size(); ++k) grad[k] = reg_strength * weights[k];
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FeatureVector& f = features[i];
    if (f.size() + 1 != weights.size()) fail("dimension", "feature dimension does not match weights");
    double s = weights.back();
    for (std::size_t k = 0; k < f.size(); ++k) s += weights[k] * f[k];
    const double margin = 1.0 - static_cast<double>(labels[i]) * s;
    if (margin <= 0.0) continue;
    const double coeff = -2.0 * sample_weights[i] * margin * static_cast<double>(labels[i]);
    for (std::size_t k = 0; k < f.size(); ++k) grad[k] += coeff * f[k];
    grad.back() += coeff;
  }
  return grad;
}

std::size_t mine_hard_negatives(const LinearModel& model, const std::vector<FeatureVector>& pool,
                                std::size_t batch_size, double threshold,
                                std::vector<std::size_t>& working) {
  if (batch_size == 0) batch_size = pool.size() > 0 ? pool.size() : 1;
  std::vector<char> in_working(pool.size(), 0);
  for (std::size_t idx : working) {
    if (idx >= pool.size()) fail("validation", "working set references a sample outside the pool");
    in_working[idx] = 1;
  }
  std::size_t added = 0;
  for (std::size_t start = 0; start < pool.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, pool.size());
    for (std::size_t idx = start; idx < end; ++idx) {
      if (in_working[idx]) continue;
      if (raw_score(model, pool[idx]) > -1.0 + threshold) {
        working.push_back(idx);
        in_working[idx] = 1;
        ++added;
      }
    }
  }
  std::sort(working.begin(), working.end());
  return added;
}

TrainOutcome train(ClassId class_id, const std::vector<FeatureVector>& positives,
                   const std::vector<FeatureVector>& negatives, const TrainOptions& options) {
  if (positives.empty()) fail("training", "no positive samples for class " + std::to_string(class_id));
  if (negatives.empty()) fail("training", "no negative samples for class " + std::to_string(class_id));
  if (options.reg_strength <= 0.0) fail("config", "reg_strength must be positive");
  const std::size_t dim = positives.front().size();
  if (dim == 0) fail("dimension", "features must be non-empty");
  for (const FeatureVector& f : positives) check_feature(f, dim);
  for (const FeatureVector& f : negatives) check_feature(f, dim);

  TrainOutcome outcome;
  outcome.model.class_id = class_id;
  outcome.model.trainable = true;

  std::vector<std::size_t> working;
  if (options.mining.enabled) {
    const std::size_t first = std::min(
        options.mining.batch_size > 0 ? options.mining.batch_size : negatives.size(),
        negatives.size());
    working.resize(first);
    for (std::size_t i = 0; i < first; ++i) working[i] = i;
  } else {
    working.resize(negatives.size());
    for (std::size_t i = 0; i < negatives.size(); ++i) working[i] = i;
  }

  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim + 1));
  while (true) {
    const Problem problem = build_problem(positives, negatives, working, options.reg_strength);
    outcome.objective_per_epoch =
        solve(problem, w, options.gradient_tolerance,
              static_cast<std::size_t>(options.max_epochs));
    if (!options.mining.enabled) break;
    outcome.model.weights.assign(w.data(), w.data() + w.size());
    const std::size_t added = mine_hard_negatives(outcome.model, negatives,
                                                  options.mining.batch_size,
                                                  options.mining.threshold, working);
    ++outcome.mining_rounds;
    if (added == 0) break;
  }
  outcome.model.weights.assign(w.data(), w.data() + w.size());
  outcome.working_negatives = working.size();
  return outcome;
}

TrainingSet assemble_training_set_fs(const Dataset& d) {
  if (d.supervision != Supervision::kFull)
    fail("supervision", "training-set assembly requires full supervision");
  TrainingSet ts;
  ts.per_class.resize(d.class_count);
  for (std::size_t c = 0; c < d.class_count; ++c)
    ts.per_class[c].class_id = static_cast<ClassId>(c);

  for (const ImageRecord& image : d.images) {
    const auto gt = gt_regions(image);
    std::set<ClassId> present(image.image_labels.begin(), image.image_labels.end());

    for (const auto& [cls, sps] : gt) {
      const auto it = image.gt_region_features.find(cls);
      if (it == image.gt_region_features.end()) {
        ts.warnings.push_back("image " + std::to_string(image.id) +
                              ": no ground-truth region feature for class " + std::to_string(cls) +
                              "; skipping that positive");
        continue;
      }
      TrainingSample sample;
      sample.image = image.id;
      sample.region = kInvalidSuperpixel;
      sample.is_gt_region = true;
      sample.gt_class = cls;
      sample.feature = it->second;
      ts.per_class[cls].positives.push_back(std::move(sample));
    }

    for (const RegionNode& node : image.forest.nodes) {
      const FeatureVector& feature = image.region_features[node.id];
      if (feature.empty())
        fail("features", "image " + std::to_string(image.id) + " region " +
                             std::to_string(node.id) + " has no feature");
      for (const auto& [cls, sps] : gt) {
        if (iou(node.superpixels, sps, image) > 0.5) {
          TrainingSample sample;
          sample.image = image.id;
          sample.region = node.id;
          sample.is_gt_region = false;
          sample.gt_class = cls;
          sample.feature = feature;
          ts.per_class[cls].positives.push_back(std::move(sample));
        }
      }
      for (std::size_t c = 0; c < d.class_count; ++c) {
        if (present.count(static_cast<ClassId>(c))) continue;
        TrainingSample sample;
        sample.image = image.id;
        sample.region = node.id;
        sample.is_gt_region = false;
        sample.gt_class = static_cast<ClassId>(c);
        sample.feature = feature;
        ts.per_class[c].negatives.push_back(std::move(sample));
      }
    }
  }

  for (const ClassTrainingSet& cts : ts.per_class) {
    if (cts.positives.empty())
      ts.warnings.push_back("class " + std::to_string(cts.class_id) +
                            " has no positive samples and will be untrainable");
  }
  return ts;
}

std::vector<LinearModel> train_all(const TrainingSet& ts, std::size_t class_count,
                                   const TrainOptions& options, unsigned jobs) {
  if (ts.per_class.size() != class_count)
    fail("validation", "training set does not cover every class");
  std::vector<LinearModel> models(class_count);
  parallel_for(class_count, resolve_jobs(jobs), [&](std::size_t c) {
    const ClassTrainingSet& cts = ts.per_class[c];
    if (cts.positives.empty() || cts.negatives.empty()) {
      models[c].class_id = static_cast<ClassId>(c);
      models[c].trainable = false;
      return;
    }
    std::vector<FeatureVector> pos;
    pos.reserve(cts.positives.size());
    for (const TrainingSample& s : cts.positives) pos.push_back(s.feature);
    std::vector<FeatureVector> neg;
    neg.reserve(cts.negatives.size());
    for (const TrainingSample& s : cts.negatives) neg.push_back(s.feature);
    models[c] = train(static_cast<ClassId>(c), pos, neg, options).model;
  });
  return models;
}

std::vector<ScoreMatrix> score_all(const std::vector<LinearModel>& models, const Dataset& d,
                                   unsigned jobs) {
  if (models.size() != d.class_count)
    fail("validation", "model file must provide one model per class");
  std::vector<const LinearModel*> by_class(d.class_count, nullptr);
  for (const LinearModel& m : models) {
    if (m.class_id >= d.class_count) fail("validation", "model references unknown class");
    if (by_class[m.class_id] != nullptr) fail("validation", "duplicate model for one class");
    by_class[m.class_id] = &m;
    if (m.trainable && m.weights.size() != d.feature_dim + 1)
      fail("dimension", "model for class " + std::to_string(m.class_id) +
                            " does not match dataset feature dimension");
  }

  std::vector<ScoreMatrix> scores(d.images.size());
  parallel_for(d.images.size(), resolve_jobs(jobs), [&](std::size_t i) {
    const ImageRecord& image = d.images[i];
    ScoreMatrix m(image.forest.nodes.size(), d.class_count);
    for (std::size_t r = 0; r < image.forest.nodes.size(); ++r) {
      const FeatureVector& f = image.region_features[r];
      if (f.empty())
        fail("features", "image " + std::to_string(image.id) + " region " + std::to_string(r) +
                             " has no feature");
      for (std::size_t c = 0; c < d.class_count; ++c)
        m.at(r, c) = raw_score(*by_class[c], f);
    }
    scores[i] = std::move(m);
  });
  return scores;
}

void save_models(const std::vector<LinearModel>& models, const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ofstream out(path);
  if (!out) fail("io", "cannot open " + name + " for writing");
  for (const LinearModel& m : models) {
    nlohmann::json j;
    j["class_id"] = m.class_id;
    if (m.trainable) {
      j["weights"] = m.weights;
    } else {
      j["untrainable"] = true;
    }
    out << j.dump() << '\n';
  }
  if (!out) fail("io", "failed while writing " + name);
}

std::vector<LinearModel> load_models(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + name + " for reading");
  std::vector<LinearModel> models;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      LinearModel m;
      m.class_id = j.at("class_id").get<ClassId>();
      if (j.value("untrainable", false)) {
        m.trainable = false;
      } else {
        m.trainable = true;
        m.weights = j.at("weights").get<std::vector<double>>();
        if (m.weights.size() < 2) fail("validation", name + ": model weights too short");
        for (double w : m.weights) {
          if (!std::isfinite(w)) fail("validation", name + ": model weight not finite");
        }
      }
      models.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      fail("parse", name + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return models;
}

}  // namespace regioncal
