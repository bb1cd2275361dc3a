#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mth/core/rng.hpp"
#include "mth/data/format.hpp"
#include "mth/data/synthetic.hpp"
#include "mth/train/trainer.hpp"
#include "mth/types.hpp"

namespace mth {

/// Configuration problems exit with code 2; runtime failures with 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string kind = "synthetic";  // or "surreal-format"
  std::string root;
  int n_train = 500;
  int n_test = 100;
  int frames_per_subject = 10;
  double depth_min = 1900;
  double depth_max = 2500;
  double pose_amplitude = 1.0;
  int background_mode = 1;
  double test_fraction = 0.2;  // used when re-splitting loaded data
};

struct ReportConfig {
  bool include_background = true;
  std::string sr_thresholds = "auto";  // or "lo:step:hi"
};

struct ExperimentConfig {
  std::vector<TaskSet> task_sets = {TaskSet{Task::Pose2D}};
  uint64_t seed = 1;
  std::string out = "runs/out";
  int jobs = 1;
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  ReportConfig report;

  std::string canonical_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "[experiment]\ntasks=";
    for (size_t i = 0; i < task_sets.size(); ++i)
      os << (i ? "," : "") << task_sets[i].str();
    os << "\nseed=" << seed << "\n";
    os << "[dataset]\nkind=" << dataset.kind << "\nroot=" << dataset.root
       << "\nn_train=" << dataset.n_train << "\nn_test=" << dataset.n_test
       << "\nframes_per_subject=" << dataset.frames_per_subject
       << "\ndepth_min=" << dataset.depth_min << "\ndepth_max=" << dataset.depth_max
       << "\npose_amplitude=" << dataset.pose_amplitude
       << "\nbackground_mode=" << dataset.background_mode
       << "\ntest_fraction=" << dataset.test_fraction << "\n";
    os << "[model]\nstacks=" << model.hg.stacks << "\nfeatures=" << model.hg.features
       << "\ndepth=" << model.hg.depth << "\nresolution=" << model.hg.resolution
       << "\ninput_resolution=" << model.hg.input_resolution
       << "\nbins=" << model.bins << "\n";
    os << "[train]\nepochs=" << train.epochs << "\nbatch_size=" << train.batch_size
       << "\nlearning_rate=" << train.learning_rate
       << "\nrms_decay=" << train.rms_decay << "\nepsilon=" << train.epsilon
       << "\ndeterministic=" << train.deterministic << "\naugment=" << train.augment
       << "\nweight_decay=" << train.weight_decay << "\ngrad_clip=" << train.grad_clip
       << "\neval_every=" << train.eval_every << "\ntask_weights="
       << train.task_weights[0] << "," << train.task_weights[1] << ","
       << train.task_weights[2] << "," << train.task_weights[3] << "\n";
    os << "[heatmap]\nsigma_xy=" << train.heatmap.sigma_xy
       << "\nsigma_z=" << train.heatmap.sigma_z << "\n";
    os << "[augment]\nscale_lo=" << train.augment_params.scale_lo
       << "\nscale_hi=" << train.augment_params.scale_hi
       << "\nrot_deg=" << train.augment_params.rot_deg
       << "\ncolor_jitter=" << train.augment_params.color_jitter << "\n";
    os << "[report]\ninclude_background=" << report.include_background
       << "\nsr_thresholds=" << report.sr_thresholds << "\n";
    return os.str();
  }

  /// Hash of the resolved configuration; equal exactly when every
  /// semantically meaningful field is equal. Output paths and job counts do
  /// not participate.
  uint64_t hash() const { return fnv1a(canonical_text()); }
};

inline void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  if (name == "desk") {
    cfg.model.hg = {2, 64, 3, 32, 128};
    cfg.dataset.kind = "synthetic";
    cfg.dataset.n_train = 500;
    cfg.dataset.n_test = 100;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 5;
    cfg.train.learning_rate = 1e-3;
    cfg.train.augment = false;
  } else if (name == "paper") {
    cfg.model.hg = {2, 256, 4, 64, 256};
    cfg.dataset.kind = "surreal-format";
    cfg.train.epochs = 30;
    cfg.train.batch_size = 5;
    cfg.train.learning_rate = 1e-3;
    cfg.train.augment = true;
  } else {
    throw ConfigError("unknown preset \"" + name + "\" (expected desk or paper)");
  }
}

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected boolean, got \"" + v + "\"");
}

inline std::vector<TaskSet> parse_task_set_list(const std::string& v) {
  std::vector<TaskSet> out;
  std::istringstream is(v);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    size_t a = tok.find_first_not_of(" \t");
    size_t b = tok.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(TaskSet::parse(tok.substr(a, b - a + 1)));
  }
  if (out.empty()) throw ConfigError("empty task set list");
  return out;
}

}  // namespace detail

/// Flat key=value sections. Unknown keys are collected and reported all at
/// once, so a typo cannot silently fall back to a default.
inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::string line, section;
  std::vector<std::string> unknown;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    std::string t = line.substr(a, b - a + 1);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = t.substr(0, eq);
    std::string val = t.substr(eq + 1);
    auto trim = [](std::string& s) {
      size_t x = s.find_first_not_of(" \t");
      size_t y = s.find_last_not_of(" \t");
      s = x == std::string::npos ? "" : s.substr(x, y - x + 1);
    };
    trim(key);
    trim(val);
    std::string full = section + "." + key;
    try {
      if (full == "experiment.tasks") cfg.task_sets = detail::parse_task_set_list(val);
      else if (full == "experiment.seed") cfg.seed = std::stoull(val);
      else if (full == "experiment.out") cfg.out = val;
      else if (full == "experiment.jobs") cfg.jobs = std::stoi(val);
      else if (full == "dataset.kind") cfg.dataset.kind = val;
      else if (full == "dataset.root") cfg.dataset.root = val;
      else if (full == "dataset.n_train") cfg.dataset.n_train = std::stoi(val);
      else if (full == "dataset.n_test") cfg.dataset.n_test = std::stoi(val);
      else if (full == "dataset.frames_per_subject") cfg.dataset.frames_per_subject = std::stoi(val);
      else if (full == "dataset.depth_min") cfg.dataset.depth_min = std::stod(val);
      else if (full == "dataset.depth_max") cfg.dataset.depth_max = std::stod(val);
      else if (full == "dataset.pose_amplitude") cfg.dataset.pose_amplitude = std::stod(val);
      else if (full == "dataset.background_mode") cfg.dataset.background_mode = std::stoi(val);
      else if (full == "dataset.test_fraction") cfg.dataset.test_fraction = std::stod(val);
      else if (full == "model.stacks") cfg.model.hg.stacks = std::stoi(val);
      else if (full == "model.features") cfg.model.hg.features = std::stoi(val);
      else if (full == "model.depth") cfg.model.hg.depth = std::stoi(val);
      else if (full == "model.resolution") cfg.model.hg.resolution = std::stoi(val);
      else if (full == "model.input_resolution") cfg.model.hg.input_resolution = std::stoi(val);
      else if (full == "model.bins") cfg.model.bins = std::stoi(val);
      else if (full == "train.epochs") cfg.train.epochs = std::stoi(val);
      else if (full == "train.batch_size") cfg.train.batch_size = std::stoi(val);
      else if (full == "train.learning_rate") cfg.train.learning_rate = std::stod(val);
      else if (full == "train.rms_decay") cfg.train.rms_decay = std::stod(val);
      else if (full == "train.epsilon") cfg.train.epsilon = std::stod(val);
      else if (full == "train.deterministic") cfg.train.deterministic = detail::parse_bool(val);
      else if (full == "train.augment") cfg.train.augment = detail::parse_bool(val);
      else if (full == "train.weight_decay") cfg.train.weight_decay = std::stod(val);
      else if (full == "train.grad_clip") cfg.train.grad_clip = std::stod(val);
      else if (full == "train.eval_every") cfg.train.eval_every = std::stoi(val);
      else if (full == "train.task_weights") {
        std::istringstream ws(val);
        std::string w;
        for (int i = 0; i < 4 && std::getline(ws, w, ','); ++i)
          cfg.train.task_weights[static_cast<size_t>(i)] = std::stod(w);
      }
      else if (full == "heatmap.sigma_xy") cfg.train.heatmap.sigma_xy = std::stod(val);
      else if (full == "heatmap.sigma_z") cfg.train.heatmap.sigma_z = std::stod(val);
      else if (full == "augment.scale_lo") cfg.train.augment_params.scale_lo = std::stod(val);
      else if (full == "augment.scale_hi") cfg.train.augment_params.scale_hi = std::stod(val);
      else if (full == "augment.rot_deg") cfg.train.augment_params.rot_deg = std::stod(val);
      else if (full == "augment.color_jitter") cfg.train.augment_params.color_jitter = std::stod(val);
      else if (full == "report.include_background") cfg.report.include_background = detail::parse_bool(val);
      else if (full == "report.sr_thresholds") cfg.report.sr_thresholds = val;
      else unknown.push_back(full + " (line " + std::to_string(line_no) + ")");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad value \"" +
                        val + "\" for " + full);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys in " + path + ":";
    for (const auto& k : unknown) msg += "\n  " + k;
    throw ConfigError(msg);
  }
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

struct DataSplits {
  std::vector<Sample> train, test;
};

inline SyntheticFigureParams synthetic_params_from(const ExperimentConfig& cfg) {
  SyntheticFigureParams p;
  p.seed = derive_seed(cfg.seed, "dataset");
  p.resolution = cfg.model.hg.input_resolution;
  p.depth_min_mm = cfg.dataset.depth_min;
  p.depth_max_mm = cfg.dataset.depth_max;
  p.pose_amplitude = cfg.dataset.pose_amplitude;
  p.background_mode = cfg.dataset.background_mode;
  p.frames_per_subject = cfg.dataset.frames_per_subject;
  return p;
}

/// Build the train/test streams. Synthetic data is generated in memory with
/// subject-disjoint splits sized to the requested counts (rounded to whole
/// subjects); surreal-format data comes from the manifest in the root.
inline DataSplits build_dataset(const ExperimentConfig& cfg) {
  DataSplits out;
  if (cfg.dataset.kind == "synthetic") {
    int n_total = cfg.dataset.n_train + cfg.dataset.n_test;
    if (n_total <= 0) throw ConfigError("dataset: empty synthetic dataset");
    SyntheticFigureParams p = synthetic_params_from(cfg);
    std::vector<Sample> all = generate_synthetic(p, n_total);
    DatasetManifest manifest;
    manifest.kind = "synthetic";
    for (int i = 0; i < n_total; ++i)
      manifest.entries.push_back(
          {all[static_cast<size_t>(i)].subject_id, "c0", std::to_string(i), Split::Train});
    double fraction = static_cast<double>(cfg.dataset.n_test) / n_total;
    manifest = make_splits(std::move(manifest), cfg.seed, fraction);
    for (int i = 0; i < n_total; ++i) {
      if (manifest.entries[static_cast<size_t>(i)].split == Split::Train)
        out.train.push_back(std::move(all[static_cast<size_t>(i)]));
      else
        out.test.push_back(std::move(all[static_cast<size_t>(i)]));
    }
  } else if (cfg.dataset.kind == "surreal-format") {
    if (cfg.dataset.root.empty())
      throw ConfigError("dataset: surreal-format requires a root directory");
    DatasetManifest manifest = DatasetManifest::read(cfg.dataset.root + "/manifest.txt");
    LoadOptions opts;
    opts.target_resolution = cfg.model.hg.input_resolution;
    out.train = load_surreal_format(cfg.dataset.root, manifest, Split::Train, opts);
    out.test = load_surreal_format(cfg.dataset.root, manifest, Split::Test, opts);
  } else {
    throw ConfigError("dataset: unknown kind \"" + cfg.dataset.kind + "\"");
  }
  return out;
}

}  // namespace mth
