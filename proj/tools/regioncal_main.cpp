#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "regioncal/calibration.hpp"
#include "regioncal/dataset.hpp"
#include "regioncal/metrics.hpp"
#include "regioncal/parallel.hpp"
#include "regioncal/svm.hpp"
#include "regioncal/weak_supervision.hpp"

namespace {

using namespace regioncal;

struct GridFlags {
  GridSpec grid;

  void attach(CLI::App* cmd) {
    cmd->add_option("--a-lo", grid.a_lo, "Lower end of the a grid line");
    cmd->add_option("--a-hi", grid.a_hi, "Upper end of the a grid line");
    cmd->add_option("--b-lo", grid.b_lo, "Lower end of the b grid line");
    cmd->add_option("--b-hi", grid.b_hi, "Upper end of the b grid line");
    cmd->add_option("--grid-points", grid.points_per_line, "Grid values per line search");
  }
};

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
}

/// Majority ground-truth class of a region (lowest class wins ties), from the
/// superpixel histograms it covers.
ClassId region_majority_class(const ImageRecord& image, const RegionNode& node,
                              std::size_t class_count) {
  std::vector<std::uint64_t> mass(class_count, 0);
  for (SuperpixelId s : node.superpixels) {
    for (const auto& [cls, count] : image.superpixels[s].gt_histogram) mass[cls] += count;
  }
  ClassId best = kInvalidClass;
  std::uint64_t best_mass = 0;
  for (std::size_t c = 0; c < class_count; ++c) {
    if (mass[c] > best_mass) {
      best = static_cast<ClassId>(c);
      best_mass = mass[c];
    }
  }
  return best;
}

/// Per-region reference labels for the Platt baseline. Fully supervised
/// datasets use each region's majority ground-truth class; weakly supervised
/// datasets fall back to the highest scoring class among the image's labels
/// (the same rule the latent relabeling uses).
std::vector<std::vector<ClassId>> platt_reference_labels(const Dataset& d,
                                                         const std::vector<ScoreMatrix>& scores) {
  std::vector<std::vector<ClassId>> labels(d.images.size());
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const ImageRecord& image = d.images[i];
    labels[i].resize(image.forest.nodes.size(), kInvalidClass);
    for (const RegionNode& node : image.forest.nodes) {
      if (d.supervision == Supervision::kFull) {
        labels[i][node.id] = region_majority_class(image, node, d.class_count);
      } else {
        ClassId best = kInvalidClass;
        double best_score = 0.0;
        for (ClassId cls : image.image_labels) {
          const double s = scores[i].at(node.id, cls);
          if (best == kInvalidClass || s > best_score) {
            best = cls;
            best_score = s;
          }
        }
        labels[i][node.id] = best;
      }
    }
  }
  return labels;
}

CalibrationResult calibrate_platt(const Dataset& d, const std::vector<ScoreMatrix>& scores,
                                  LossKind kind, const GridSpec& grid, unsigned jobs) {
  const auto reference = platt_reference_labels(d, scores);
  CalibrationResult result;
  result.kind = kind;
  result.params = grid.initial_params(d.class_count);
  for (std::size_t c = 0; c < d.class_count; ++c) {
    std::vector<double> class_scores;
    std::vector<int> class_labels;
    for (std::size_t i = 0; i < d.images.size(); ++i) {
      for (std::size_t r = 0; r < scores[i].regions(); ++r) {
        class_scores.push_back(scores[i].at(r, static_cast<std::size_t>(c)));
        class_labels.push_back(reference[i][r] == static_cast<ClassId>(c) ? 1 : -1);
      }
    }
    const bool has_pos = std::count(class_labels.begin(), class_labels.end(), 1) > 0;
    const bool has_neg = std::count(class_labels.begin(), class_labels.end(), -1) > 0;
    if (!has_pos || !has_neg) {
      std::cerr << "warning: class " << c
                << " has single-sign reference labels; keeping init sigmoid\n";
      continue;
    }
    const auto [a, b] = platt_fit(class_scores, class_labels, grid);
    result.params.a[c] = a;
    result.params.b[c] = b;
  }
  result.initial_loss = evaluate_loss(d, scores, grid.initial_params(d.class_count), kind, jobs);
  result.final_loss = evaluate_loss(d, scores, result.params, kind, jobs);
  return result;
}

int cmd_generate(const SyntheticConfig& cfg, const std::string& supervision,
                 const std::string& out) {
  Dataset d = generate_synthetic(cfg);
  const auto pixels = class_pixel_counts(d);
  std::uint64_t total = 0;
  for (std::uint64_t n : pixels) total += n;
  if (supervision == "weak") {
    d = strip_to_weak(std::move(d));
  } else if (supervision != "full") {
    fail("usage", "supervision must be 'full' or 'weak'");
  }
  save_dataset(d, out);
  std::cout << "wrote " << d.images.size() << " images (" << to_string(d.supervision)
            << " supervision) to " << out << '\n';
  std::cout << "class pixel frequencies:\n";
  for (std::size_t c = 0; c < pixels.size(); ++c) {
    const double freq = total > 0 ? static_cast<double>(pixels[c]) / static_cast<double>(total) : 0.0;
    char line[96];
    std::snprintf(line, sizeof line, "  class %zu: %12llu pixels  (%.4f)", c,
                  static_cast<unsigned long long>(pixels[c]), freq);
    std::cout << line << '\n';
  }
  return 0;
}

int cmd_train(const std::string& data, const std::string& out, const TrainOptions& options,
              int rounds, const std::string& snapshot_dir, unsigned jobs) {
  const Dataset d = load_dataset(data);
  std::vector<LinearModel> models;
  if (d.supervision == Supervision::kFull) {
    const TrainingSet ts = assemble_training_set_fs(d);
    print_warnings(ts.warnings);
    models = train_all(ts, d.class_count, options, jobs);
  } else {
    std::function<void(int, const LatentAssignment&)> on_round;
    if (!snapshot_dir.empty()) {
      std::filesystem::create_directories(snapshot_dir);
      on_round = [&](int round, const LatentAssignment& assignment) {
        save_assignment(assignment, std::filesystem::path(snapshot_dir) /
                                        ("assignment_round_" + std::to_string(round) + ".jsonl"));
      };
    }
    const AlternationResult result = alternate_train(d, rounds, options, jobs, on_round);
    models = result.models;
    for (std::size_t k = 0; k < result.history.size(); ++k) {
      const RoundStats& stats = result.history[k];
      std::size_t assigned = 0;
      for (std::size_t n : stats.positives_per_class) assigned += n;
      std::cout << "round " << (k + 1) << ": " << assigned << " positive assignments, "
                << "image-label loss " << stats.ws_loss_at_init
                << (stats.fixed_point ? " (fixed point)" : "") << '\n';
    }
  }
  save_models(models, out);
  std::size_t untrainable = 0;
  for (const LinearModel& m : models) {
    if (!m.trainable) ++untrainable;
  }
  std::cout << "wrote " << models.size() << " models to " << out;
  if (untrainable > 0) std::cout << " (" << untrainable << " untrainable)";
  std::cout << '\n';
  return 0;
}

int cmd_calibrate(const std::string& data, const std::string& model_path, const std::string& out,
                  const std::string& method, const GridSpec& grid, unsigned jobs) {
  const Dataset d = load_dataset(data);
  const auto models = load_models(model_path);
  const auto scores = score_all(models, d, jobs);
  const LossKind kind = d.supervision == Supervision::kFull ? LossKind::kFullySupervised
                                                            : LossKind::kWeaklySupervised;
  CalibrationResult result;
  if (method == "jc") {
    result = joint_calibrate(d, scores, kind, grid, jobs);
  } else if (method == "platt") {
    result = calibrate_platt(d, scores, kind, grid, jobs);
  } else if (method == "none") {
    grid.validate();
    result.kind = kind;
    result.params = grid.initial_params(d.class_count);
    result.initial_loss = evaluate_loss(d, scores, result.params, kind, jobs);
    result.final_loss = result.initial_loss;
  } else {
    fail("usage", "method must be one of jc, platt, none");
  }
  save_calibration(result, out);
  std::cout << "method " << method << ": training loss " << result.initial_loss << " -> "
            << result.final_loss << ", written to " << out << '\n';
  return 0;
}

int cmd_eval(const std::string& data, const std::string& model_path,
             const std::string& calibration_path, const std::string& report_path, bool text,
             bool oracle_check, unsigned jobs) {
  const Dataset d = load_dataset(data);
  const auto models = load_models(model_path);
  const auto scores = score_all(models, d, jobs);
  CalibrationParams params = GridSpec{}.initial_params(d.class_count);
  if (!calibration_path.empty()) {
    const CalibrationResult calibration = load_calibration(calibration_path);
    if (calibration.params.class_count() != d.class_count)
      fail("dimension", "calibration file does not cover the dataset's classes");
    params = calibration.params;
  }
  const auto labelings = label_dataset(d, scores, params, jobs);
  if (oracle_check) {
    for (std::size_t i = 0; i < d.images.size(); ++i) {
      const Labeling naive = label_image_naive(d.images[i].forest, scores[i], params);
      if (naive != labelings[i])
        fail("internal", "fast and naive labelers disagree on image " + std::to_string(i));
    }
    std::cerr << "oracle check passed on " << d.images.size() << " images\n";
  }

  nlohmann::json j;
  std::string table;
  if (d.supervision == Supervision::kFull) {
    const EvalReport report = evaluate(labelings, d);
    j = report_to_json(report);
    table = report_to_text(report);
  } else {
    const WeakEvalReport report = evaluate_weak(labelings, d);
    j = report_to_json(report);
    table = report_to_text(report);
  }
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) fail("io", "cannot open " + report_path + " for writing");
    out << j.dump(2) << '\n';
    std::cout << table;
  } else if (text) {
    std::cout << table;
  } else {
    std::cout << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_compare(const std::string& data, const std::string& model_path,
                const std::string& report_path, const GridSpec& grid, unsigned jobs) {
  const Dataset d = load_dataset(data);
  if (d.supervision != Supervision::kFull)
    fail("supervision", "compare requires a fully supervised dataset");
  const auto models = load_models(model_path);
  const auto scores = score_all(models, d, jobs);

  struct Row {
    std::string name;
    CalibrationParams params;
  };
  std::vector<Row> rows;
  rows.push_back({"uncalibrated", grid.initial_params(d.class_count)});
  rows.push_back(
      {"platt", calibrate_platt(d, scores, LossKind::kFullySupervised, grid, jobs).params});
  rows.push_back(
      {"joint", joint_calibrate(d, scores, LossKind::kFullySupervised, grid, jobs).params});

  nlohmann::json out = nlohmann::json::array();
  std::cout << "method          class-avg      global\n";
  for (const Row& row : rows) {
    const auto labelings = label_dataset(d, scores, row.params, jobs);
    const EvalReport report = evaluate(labelings, d);
    char line[96];
    std::snprintf(line, sizeof line, "%-14s %9.4f  %10.4f", row.name.c_str(),
                  report.class_average_accuracy, report.global_accuracy);
    std::cout << line << '\n';
    out.push_back({{"method", row.name},
                   {"class_average_accuracy", report.class_average_accuracy},
                   {"global_accuracy", report.global_accuracy}});
  }
  if (!report_path.empty()) {
    std::ofstream file(report_path);
    if (!file) fail("io", "cannot open " + report_path + " for writing");
    file << out.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-based segmentation: synthetic data, SVM training, score "
               "calibration, evaluation"};
  app.require_subcommand(1);

  unsigned jobs = 0;
  app.add_option("--jobs", jobs,
                 "Worker threads (0 = REGIONCAL_JOBS env or hardware concurrency)")
      ->capture_default_str();

  // generate
  SyntheticConfig cfg;
  std::string gen_supervision = "full";
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("--classes", cfg.class_count, "Number of classes")->capture_default_str();
  gen->add_option("--images", cfg.images, "Number of images")->capture_default_str();
  gen->add_option("--superpixels", cfg.superpixels_per_image, "Superpixels per image")
      ->capture_default_str();
  gen->add_option("--hierarchies", cfg.hierarchy_count, "Merge trees per image")
      ->capture_default_str();
  gen->add_option("--imbalance", cfg.imbalance_exponent, "Power-law exponent of class frequencies")
      ->capture_default_str();
  gen->add_option("--feature-dim", cfg.feature_dim, "Feature dimension (0 = auto)")
      ->capture_default_str();
  gen->add_option("--separation", cfg.cluster_separation, "Distance between class feature means")
      ->capture_default_str();
  gen->add_option("--noise", cfg.noise_sigma, "Feature noise standard deviation")
      ->capture_default_str();
  gen->add_option("--mix", cfg.mix_fraction, "Max minority fraction inside a superpixel")
      ->capture_default_str();
  gen->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
  gen->add_option("--supervision", gen_supervision, "full or weak")->capture_default_str();
  gen->add_option("-o,--out", gen_out, "Output dataset path")->required();

  // train
  std::string train_data;
  std::string train_out;
  std::string snapshot_dir;
  TrainOptions train_options;
  int rounds = 5;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one-vs-all linear SVMs");
  train_cmd->add_option("--data", train_data, "Training dataset")->required();
  train_cmd->add_option("-o,--out", train_out, "Output model file")->required();
  train_cmd->add_option("--reg", train_options.reg_strength, "Regularization strength")
      ->capture_default_str();
  train_cmd->add_flag("--mining", train_options.mining.enabled, "Enable hard-negative mining");
  train_cmd->add_option("--batch-size", train_options.mining.batch_size, "Mining batch size")
      ->capture_default_str();
  train_cmd->add_option("--threshold", train_options.mining.threshold, "Mining margin threshold")
      ->capture_default_str();
  train_cmd->add_option("--rounds", rounds, "Alternation rounds (weak supervision)")
      ->capture_default_str();
  train_cmd->add_option("--snapshot-dir", snapshot_dir,
                        "Write per-round latent assignments here (weak supervision)");

  // calibrate
  std::string cal_data;
  std::string cal_models;
  std::string cal_out;
  std::string method = "jc";
  GridFlags cal_grid;
  CLI::App* cal = app.add_subcommand("calibrate", "Fit per-class sigmoid calibration");
  cal->add_option("--data", cal_data, "Training dataset")->required();
  cal->add_option("--models", cal_models, "Model file")->required();
  cal->add_option("-o,--out", cal_out, "Output calibration file")->required();
  cal->add_option("--method", method, "jc, platt, or none")->capture_default_str();
  cal_grid.attach(cal);

  // eval
  std::string eval_data;
  std::string eval_models;
  std::string eval_calibration;
  std::string eval_report;
  bool eval_text = false;
  bool oracle_check = false;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Label a dataset and report accuracy");
  eval_cmd->add_option("--data", eval_data, "Dataset to evaluate")->required();
  eval_cmd->add_option("--models", eval_models, "Model file")->required();
  eval_cmd->add_option("--calibration", eval_calibration,
                       "Calibration file (omit for uncalibrated)");
  eval_cmd->add_option("--report", eval_report, "Write the JSON report here");
  eval_cmd->add_flag("--text", eval_text, "Print the text table instead of JSON");
  eval_cmd->add_flag("--oracle-check", oracle_check,
                     "Cross-check the fast labeler against the exhaustive one");

  // compare
  std::string cmp_data;
  std::string cmp_models;
  std::string cmp_report;
  GridFlags cmp_grid;
  CLI::App* cmp = app.add_subcommand("compare",
                                     "Evaluate uncalibrated / platt / joint on one dataset");
  cmp->add_option("--data", cmp_data, "Fully supervised dataset")->required();
  cmp->add_option("--models", cmp_models, "Model file")->required();
  cmp->add_option("--report", cmp_report, "Write the JSON comparison here");
  cmp_grid.attach(cmp);

  try {
    app.parse(argc, argv);
    const unsigned resolved = regioncal::resolve_jobs(jobs);
    if (gen->parsed()) return cmd_generate(cfg, gen_supervision, gen_out);
    if (train_cmd->parsed())
      return cmd_train(train_data, train_out, train_options, rounds, snapshot_dir, resolved);
    if (cal->parsed())
      return cmd_calibrate(cal_data, cal_models, cal_out, method, cal_grid.grid, resolved);
    if (eval_cmd->parsed())
      return cmd_eval(eval_data, eval_models, eval_calibration, eval_report, eval_text,
                      oracle_check, resolved);
    if (cmp->parsed()) return cmd_compare(cmp_data, cmp_models, cmp_report, cmp_grid.grid, resolved);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    nlohmann::json err{{"kind", "usage"}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 2;
  } catch (const regioncal::Error& e) {
    nlohmann::json err{{"kind", e.kind()}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return e.kind() == "usage" || e.kind() == "config" ? 2 : 1;
  } catch (const std::exception& e) {
    nlohmann::json err{{"kind", "internal"}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 1;
  }
}
