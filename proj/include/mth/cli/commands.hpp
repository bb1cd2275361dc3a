#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "mth/cli/config.hpp"
#include "mth/cli/tables.hpp"
#include "mth/data/consistency.hpp"
#include "mth/train/evaluate.hpp"
#include "mth/train/trainer.hpp"

namespace mth::cli {

namespace fs = std::filesystem;

/// All 8 task subsets containing the given task, i.e. the column set of the
/// corresponding results table.
inline std::vector<TaskSet> paper_combos(Task target) {
  std::vector<TaskSet> out;
  for (const TaskSet& s : TaskSet::all_nonempty())
    if (s.contains(target)) out.push_back(s);
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

inline void write_frame_errors(const std::string& path, Task task,
                               const std::vector<FrameErrorRecord>& records) {
  std::ostringstream os;
  os.precision(17);
  os << "frame_id,error";
  for (const auto& label : FrameErrors::labels(task)) os << "," << label;
  os << "\n";
  for (const auto& rec : records) {
    os << rec.frame_id << "," << rec.overall;
    for (double v : rec.per_label) {
      os << ",";
      if (metric_present(v))
        os << v;
      else
        os << "nan";
    }
    os << "\n";
  }
  write_text_file(path, os.str());
}

inline std::vector<FrameErrorRecord> read_frame_errors(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::vector<FrameErrorRecord> out;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cell;
    FrameErrorRecord rec;
    int idx = 0;
    while (std::getline(is, cell, ',')) {
      if (idx == 0)
        rec.frame_id = cell;
      else if (idx == 1)
        rec.overall = std::stod(cell);
      else
        rec.per_label.push_back(cell == "nan" ? kMetricMissing : std::stod(cell));
      ++idx;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single run
// ---------------------------------------------------------------------------

struct RunArtifacts {
  std::string dir;
  MetricsReport report;
  std::string checkpoint_path;
  uint64_t config_hash = 0;
};

/// Train one task set and evaluate it on the test split. Each job derives
/// its seed as base_seed ^ hash(task set), so sweep jobs are independent but
/// reproducible.
inline RunArtifacts run_single(const ExperimentConfig& cfg, TaskSet tasks,
                               const std::string& out_dir, const DataSplits& data,
                               std::ostream* progress = nullptr) {
  fs::create_directories(out_dir);
  uint64_t job_seed = cfg.seed ^ fnv1a(tasks.str());
  std::string job_config = cfg.canonical_text() + "[job]\ntasks=" + tasks.str() + "\n";
  uint64_t job_hash = fnv1a(job_config);
  write_text_file(out_dir + "/config.txt",
                  job_config + "hash=" + std::to_string(job_hash) + "\n");

  MultiTaskModel<float> model(tasks, cfg.model, job_seed);
  TrainConfig tc = cfg.train;
  tc.seed = job_seed;
  tc.checkpoint_dir = out_dir;
  {
    std::ofstream log(out_dir + "/training.log");
    log << kTrainLogHeader << "\n";
    TrainSession session(model, data.train, tc);
    session.run_epochs(tc.epochs, &log);
    session.save(out_dir + "/checkpoint.mth");
  }
  if (progress)
    (*progress) << "trained " << tasks.str() << " ("
                << model.parameter_count() << " params, " << data.train.size()
                << " samples)\n";

  EvalResult eval = evaluate(model, data.test);
  eval.report.task_combo = tasks.str();
  nlohmann::json rj = eval.report.to_json();
  rj["config_hash"] = job_hash;
  write_text_file(out_dir + "/report.json", rj.dump(1) + "\n");
  write_text_file(out_dir + "/report.csv", eval.report.to_csv());
  for (Task t : tasks.list())
    write_frame_errors(out_dir + "/errors_" + std::string(task_token(t)) + ".csv",
                       t, eval.accums.errors.get(t));
  return {out_dir, eval.report, out_dir + "/checkpoint.mth", job_hash};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_train(const ExperimentConfig& cfg) {
  if (cfg.task_sets.size() != 1)
    throw ConfigError("train: expected exactly one task set (use sweep for several)");
  cfg.model.validate();
  cfg.train.validate();
  DataSplits data = build_dataset(cfg);
  RunArtifacts art = run_single(cfg, cfg.task_sets[0], cfg.out, data, &std::cout);
  std::cout << "report: " << art.dir << "/report.json\n";
  return 0;
}

inline int cmd_evaluate(ExperimentConfig cfg, const std::string& checkpoint_path) {
  CheckpointMeta meta = peek_checkpoint(checkpoint_path);
  cfg.model = meta.model_config;
  TaskSet tasks = TaskSet::parse(meta.task_set);
  MultiTaskModel<float> model(tasks, meta.model_config, meta.init_seed);
  load_checkpoint(checkpoint_path, model, nullptr);
  DataSplits data = build_dataset(cfg);
  EvalResult eval = evaluate(model, data.test);
  eval.report.task_combo = tasks.str();
  fs::create_directories(cfg.out);
  write_text_file(cfg.out + "/report.json", eval.report.to_json().dump(1) + "\n");
  write_text_file(cfg.out + "/report.csv", eval.report.to_csv());
  for (Task t : tasks.list())
    write_frame_errors(cfg.out + "/errors_" + std::string(task_token(t)) + ".csv",
                       t, eval.accums.errors.get(t));
  std::cout << "report: " << cfg.out << "/report.json\n";
  return 0;
}

/// Train every requested task set under the shared config, then emit one
/// wide comparison table per task whose single-task baseline was swept.
inline int cmd_sweep(const ExperimentConfig& cfg) {
  if (cfg.task_sets.empty()) throw ConfigError("sweep: no task sets");
  for (size_t i = 0; i < cfg.task_sets.size(); ++i)
    for (size_t j = i + 1; j < cfg.task_sets.size(); ++j)
      if (cfg.task_sets[i] == cfg.task_sets[j])
        throw ConfigError("sweep: duplicate task set " + cfg.task_sets[i].str());
  std::vector<Task> targets;
  for (Task t : kAllTasks) {
    bool has_baseline = false, appears = false;
    for (const TaskSet& s : cfg.task_sets) {
      appears = appears || s.contains(t);
      has_baseline = has_baseline || s == TaskSet{t};
    }
    if (appears && has_baseline) targets.push_back(t);
  }
  if (targets.empty())
    throw ConfigError("sweep: baseline absent; include at least one single-task set");
  cfg.model.validate();
  cfg.train.validate();

  DataSplits data = build_dataset(cfg);
  fs::create_directories(cfg.out);
  std::vector<RunArtifacts> artifacts(cfg.task_sets.size());
  int jobs = std::max(1, cfg.jobs);
  std::vector<std::string> failures(cfg.task_sets.size());
  for (size_t base = 0; base < cfg.task_sets.size(); base += static_cast<size_t>(jobs)) {
    size_t chunk = std::min(cfg.task_sets.size() - base, static_cast<size_t>(jobs));
    std::vector<std::thread> workers;
    for (size_t k = 0; k < chunk; ++k) {
      size_t i = base + k;
      workers.emplace_back([&, i]() {
        try {
          std::string dir = cfg.out + "/" + cfg.task_sets[i].str();
          artifacts[i] = run_single(cfg, cfg.task_sets[i], dir, data);
        } catch (const std::exception& e) {
          failures[i] = e.what();
        }
      });
    }
    for (auto& w : workers) w.join();
  }
  for (size_t i = 0; i < failures.size(); ++i)
    if (!failures[i].empty())
      throw std::runtime_error("sweep job " + cfg.task_sets[i].str() +
                               " failed: " + failures[i]);
  for (const auto& art : artifacts)
    std::cout << "swept " << art.report.task_combo << " -> " << art.dir << "\n";

  nlohmann::json sweep_json;
  sweep_json["config_hash"] = cfg.hash();
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& art : artifacts) {
    nlohmann::json r;
    r["task_combo"] = art.report.task_combo;
    r["report"] = art.dir + "/report.json";
    r["checkpoint"] = art.checkpoint_path;
    r["config_hash"] = art.config_hash;
    runs.push_back(r);
  }
  sweep_json["runs"] = runs;

  for (Task target : targets) {
    std::vector<std::string> combos;
    std::vector<const MetricsReport*> reports;
    for (size_t i = 0; i < cfg.task_sets.size(); ++i) {
      if (!cfg.task_sets[i].contains(target)) continue;
      combos.push_back(cfg.task_sets[i].str());
      reports.push_back(&artifacts[i].report);
    }
    ComparisonTable table = build_comparison_table(target, combos, reports);
    std::string token(task_token(target));
    write_text_file(cfg.out + "/table_" + token + ".csv", table.to_csv());
    write_text_file(cfg.out + "/table_" + token + ".json",
                    table.to_json().dump(1) + "\n");
    sweep_json["tables"][token] = cfg.out + "/table_" + token + ".json";
  }
  write_text_file(cfg.out + "/sweep.json", sweep_json.dump(1) + "\n");
  std::cout << "sweep summary: " << cfg.out << "/sweep.json\n";
  return 0;
}

namespace detail {

inline std::vector<double> threshold_grid(const std::string& spec,
                                          double max_error) {
  std::vector<double> out;
  if (spec != "auto") {
    double lo, step, hi;
    char c1, c2;
    std::istringstream is(spec);
    if (!(is >> lo >> c1 >> step >> c2 >> hi) || c1 != ':' || c2 != ':' ||
        step <= 0 || hi < lo)
      throw ConfigError("bad sr_thresholds \"" + spec + "\" (want lo:step:hi)");
    for (double t = lo; t <= hi + 1e-12; t += step) out.push_back(t);
    return out;
  }
  double hi = std::max(1e-6, max_error * 1.02);
  for (int i = 0; i <= 40; ++i) out.push_back(hi * i / 40.0);
  return out;
}

inline std::vector<double> overall_errors(const std::vector<FrameErrorRecord>& recs) {
  std::vector<double> out;
  for (const auto& r : recs) out.push_back(r.overall);
  return out;
}

inline std::vector<double> label_errors(const std::vector<FrameErrorRecord>& recs,
                                        size_t label_idx) {
  std::vector<double> out;
  for (const auto& r : recs)
    if (label_idx < r.per_label.size() && metric_present(r.per_label[label_idx]))
      out.push_back(r.per_label[label_idx]);
  return out;
}

}  // namespace detail

/// Success-rate curves from stored per-frame error files: baseline vs
/// candidate per task, plus one per-part series (the part with the largest
/// mean improvement unless one is named).
inline int cmd_curves(const ExperimentConfig& cfg, const std::string& baseline_dir,
                      const std::string& candidate_dir, const std::string& part) {
  fs::create_directories(cfg.out);
  bool any = false;
  for (Task t : kAllTasks) {
    std::string token(task_token(t));
    std::string bpath = baseline_dir + "/errors_" + token + ".csv";
    std::string cpath = candidate_dir + "/errors_" + token + ".csv";
    if (!fs::exists(bpath) || !fs::exists(cpath)) continue;
    any = true;
    auto brecs = read_frame_errors(bpath);
    auto crecs = read_frame_errors(cpath);
    auto berr = detail::overall_errors(brecs);
    auto cerr = detail::overall_errors(crecs);
    double max_err = 0;
    for (double e : berr) max_err = std::max(max_err, e);
    for (double e : cerr) max_err = std::max(max_err, e);
    auto grid = detail::threshold_grid(cfg.report.sr_thresholds, max_err);

    auto labels = FrameErrors::labels(t);
    size_t sel = 0;
    if (!part.empty()) {
      auto it = std::find(labels.begin(), labels.end(), part);
      if (it == labels.end())
        throw ConfigError("curves: unknown part/joint \"" + part + "\"");
      sel = static_cast<size_t>(it - labels.begin());
    } else {
      double best_gain = -1e300;
      for (size_t li = 0; li < labels.size(); ++li) {
        auto be = detail::label_errors(brecs, li);
        auto ce = detail::label_errors(crecs, li);
        if (be.empty() || ce.empty()) continue;
        double bm = 0, cm = 0;
        for (double e : be) bm += e;
        for (double e : ce) cm += e;
        double gain = bm / static_cast<double>(be.size()) -
                      cm / static_cast<double>(ce.size());
        if (gain > best_gain) {
          best_gain = gain;
          sel = li;
        }
      }
    }

    std::ostringstream os;
    os.precision(17);
    os << "series,threshold,percent\n";
    auto emit = [&](const std::string& name, const std::vector<double>& errors) {
      auto curve = success_rate_curve(errors, grid);
      for (size_t i = 0; i < grid.size(); ++i)
        os << name << "," << grid[i] << "," << curve[i] << "\n";
    };
    emit("baseline", berr);
    emit("candidate", cerr);
    emit("baseline:" + labels[sel], detail::label_errors(brecs, sel));
    emit("candidate:" + labels[sel], detail::label_errors(crecs, sel));
    write_text_file(cfg.out + "/curves_" + token + ".csv", os.str());
    std::cout << "curves_" << token << ".csv (part series: " << labels[sel] << ")\n";
  }
  if (!any)
    throw ConfigError("curves: no matching errors_<task>.csv files in the two runs");
  return 0;
}

/// Signed per-part improvements between two stored reports, positive in each
/// metric's "better" direction; emitted as CSV plus a label->value JSON map
/// for external plotting.
inline int cmd_improve(const ExperimentConfig& cfg, const std::string& baseline_json,
                       const std::string& candidate_json) {
  auto load = [](const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("improve: cannot read " + path);
    nlohmann::json j;
    f >> j;
    return MetricsReport::from_json(j);
  };
  MetricsReport base = load(baseline_json);
  MetricsReport cand = load(candidate_json);
  ImprovementMap imp = improvement_map(base, cand);

  fs::create_directories(cfg.out);
  std::ostringstream os;
  os.precision(17);
  os << "metric,part_or_joint,improvement,unit\n";
  nlohmann::json j;
  j["baseline"] = base.task_combo;
  j["candidate"] = cand.task_combo;
  auto emit_parts = [&](const std::string& metric, const std::array<double, kNumParts>& v,
                        double mean, const std::string& unit) {
    for (int p = 0; p < kNumParts; ++p) {
      os << metric << "," << part_name(p) << "," << v[static_cast<size_t>(p)] << ","
         << unit << "\n";
      j[metric][std::string(part_name(p))] = v[static_cast<size_t>(p)];
    }
    os << metric << ",Mean," << mean << "," << unit << "\n";
    j[metric]["Mean"] = mean;
  };
  auto emit_joints = [&](const std::string& metric, const std::array<double, kNumJoints>& v,
                         double mean, const std::string& unit) {
    for (int jt = 0; jt < kNumJoints; ++jt) {
      os << metric << "," << joint_name(jt) << "," << v[static_cast<size_t>(jt)]
         << "," << unit << "\n";
      j[metric][std::string(joint_name(jt))] = v[static_cast<size_t>(jt)];
    }
    os << metric << ",Mean," << mean << "," << unit << "\n";
    j[metric]["Mean"] = mean;
  };
  if (imp.iou) emit_parts("iou", *imp.iou, imp.iou_mean, "percent");
  if (imp.pckh) emit_joints("pckh", *imp.pckh, imp.pckh_mean, "percent");
  if (imp.depth_rmse) emit_parts("depth_rmse", *imp.depth_rmse, imp.depth_mean, "bins");
  if (imp.mjd) emit_joints("mjd", *imp.mjd, imp.mjd_mean, "mm");
  write_text_file(cfg.out + "/improvement.csv", os.str());
  write_text_file(cfg.out + "/improvement.json", j.dump(1) + "\n");
  std::cout << "improvement map: " << cfg.out << "/improvement.csv\n";
  return 0;
}

/// Run the modal-consistency validation pass over a dataset.
inline int cmd_validate_data(const ExperimentConfig& cfg, int n) {
  std::vector<std::string> violations;
  size_t checked = 0;
  if (cfg.dataset.kind == "synthetic") {
    SyntheticFigureParams p = synthetic_params_from(cfg);
    std::vector<Sample> samples = generate_synthetic(p, n);
    violations = validate_dataset(samples);
    checked = samples.size();
  } else {
    DatasetManifest manifest = DatasetManifest::read(cfg.dataset.root + "/manifest.txt");
    LoadOptions opts;
    opts.target_resolution = cfg.model.hg.input_resolution;
    for (Split split : {Split::Train, Split::Test}) {
      auto samples = load_surreal_format(cfg.dataset.root, manifest, split, opts);
      auto v = validate_dataset(samples);
      violations.insert(violations.end(), v.begin(), v.end());
      checked += samples.size();
    }
  }
  std::cout << "validated " << checked << " samples: " << violations.size()
            << " violations\n";
  for (size_t i = 0; i < std::min<size_t>(violations.size(), 20); ++i)
    std::cout << "  " << violations[i] << "\n";
  if (violations.size() > 20)
    std::cout << "  ... " << violations.size() - 20 << " more\n";
  return violations.empty() ? 0 : 3;
}

/// Write n synthetic samples in the on-disk dataset layout, one clip
/// directory per subject, plus the split manifest.
inline int cmd_gen_synthetic(const ExperimentConfig& cfg, int n) {
  SyntheticFigureParams p = synthetic_params_from(cfg);
  std::vector<Sample> samples = generate_synthetic(p, n);
  DatasetManifest manifest;
  manifest.kind = "surreal-format";
  std::map<std::string, int> frame_counter;
  for (const Sample& s : samples) {
    int idx = frame_counter[s.subject_id]++;
    save_frame(cfg.out + "/" + s.subject_id, idx, s);
    manifest.entries.push_back({s.subject_id, s.subject_id,
                                s.subject_id + "/" + frame_prefix(idx), Split::Train});
  }
  manifest = make_splits(std::move(manifest), cfg.seed, cfg.dataset.test_fraction);
  manifest.write(cfg.out + "/manifest.txt");
  std::cout << "wrote " << samples.size() << " samples to " << cfg.out << " ("
            << manifest.count(Split::Train) << " train / "
            << manifest.count(Split::Test) << " test)\n";
  return 0;
}

}  // namespace mth::cli
