#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mth/metrics.hpp"

namespace mth {

/// One wide comparison table: a row per part/joint (plus Mean rows), a
/// column per task combination. Lower-is-better metrics flip the best-cell
/// direction.
struct ComparisonTable {
  std::string target_task;   // task token
  std::string metric;        // "iou", "pckh", "depth_rmse", "mjd"
  bool higher_is_better = true;
  std::vector<std::string> columns;  // task combo strings
  struct Row {
    std::string label;
    std::vector<double> values;  // NaN = missing
  };
  std::vector<Row> rows;

  /// Column indices holding the per-row best value (all tied winners).
  std::vector<std::vector<bool>> best_flags() const {
    std::vector<std::vector<bool>> flags(rows.size(),
                                         std::vector<bool>(columns.size(), false));
    for (size_t r = 0; r < rows.size(); ++r) {
      double best = kMetricMissing;
      for (double v : rows[r].values) {
        if (!metric_present(v)) continue;
        if (!metric_present(best) || (higher_is_better ? v > best : v < best))
          best = v;
      }
      if (!metric_present(best)) continue;
      for (size_t c = 0; c < columns.size(); ++c)
        flags[r][c] = metric_present(rows[r].values[c]) && rows[r].values[c] == best;
    }
    return flags;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << metric;
    for (const auto& c : columns) os << "," << c;
    os << "\n";
    for (const auto& row : rows) {
      os << row.label;
      for (double v : row.values) {
        os << ",";
        if (metric_present(v))
          os << v;
        else
          os << "nan";
      }
      os << "\n";
    }
    return os.str();
  }

  static ComparisonTable from_csv(const std::string& text) {
    ComparisonTable t;
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("table: empty csv");
    {
      std::istringstream hs(line);
      std::string cell;
      bool first = true;
      while (std::getline(hs, cell, ',')) {
        if (first) {
          t.metric = cell;
          first = false;
        } else {
          t.columns.push_back(cell);
        }
      }
    }
    t.higher_is_better = t.metric == "iou" || t.metric == "pckh";
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream rs(line);
      std::string cell;
      Row row;
      bool first = true;
      while (std::getline(rs, cell, ',')) {
        if (first) {
          row.label = cell;
          first = false;
        } else {
          row.values.push_back(cell == "nan" ? kMetricMissing : std::stod(cell));
        }
      }
      if (row.values.size() != t.columns.size())
        throw std::runtime_error("table: ragged row " + row.label);
      t.rows.push_back(std::move(row));
    }
    return t;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["target_task"] = target_task;
    j["metric"] = metric;
    j["higher_is_better"] = higher_is_better;
    j["columns"] = columns;
    auto flags = best_flags();
    nlohmann::json rows_json = nlohmann::json::array();
    for (size_t r = 0; r < rows.size(); ++r) {
      nlohmann::json row;
      row["label"] = rows[r].label;
      nlohmann::json cells = nlohmann::json::array();
      for (size_t c = 0; c < columns.size(); ++c) {
        nlohmann::json cell;
        cell["combo"] = columns[c];
        if (metric_present(rows[r].values[c]))
          cell["value"] = rows[r].values[c];
        else
          cell["value"] = nullptr;
        cell["best"] = flags[r][c];
        cells.push_back(cell);
      }
      row["cells"] = cells;
      rows_json.push_back(row);
    }
    j["rows"] = rows_json;
    return j;
  }
};

/// Assemble the per-task comparison table from one report per combo, in the
/// row layout of the corresponding results table.
inline ComparisonTable build_comparison_table(
    Task target, const std::vector<std::string>& combos,
    const std::vector<const MetricsReport*>& reports) {
  if (combos.size() != reports.size())
    throw std::invalid_argument("table: combo/report count mismatch");
  ComparisonTable t;
  t.target_task = std::string(task_token(target));
  size_t n = combos.size();
  t.columns = combos;
  auto add_row = [&](const std::string& label, auto getter) {
    ComparisonTable::Row row;
    row.label = label;
    for (size_t i = 0; i < n; ++i) row.values.push_back(getter(*reports[i]));
    t.rows.push_back(std::move(row));
  };
  switch (target) {
    case Task::PartSeg:
      t.metric = "iou";
      t.higher_is_better = true;
      for (int p = 0; p < kNumParts; ++p)
        add_row(std::string(part_name(p)), [p](const MetricsReport& r) {
          return r.seg ? r.seg->iou[static_cast<size_t>(p)] : kMetricMissing;
        });
      add_row("Mean", [](const MetricsReport& r) {
        return r.seg ? r.seg->mean_incl_background : kMetricMissing;
      });
      break;
    case Task::Pose2D:
      t.metric = "pckh";
      t.higher_is_better = true;
      for (int j = 0; j < kNumJoints; ++j)
        add_row(std::string(joint_name(j)), [j](const MetricsReport& r) {
          return r.pose2d ? r.pose2d->pckh[static_cast<size_t>(j)] : kMetricMissing;
        });
      add_row("Mean", [](const MetricsReport& r) {
        return r.pose2d ? r.pose2d->mean : kMetricMissing;
      });
      break;
    case Task::Depth:
      t.metric = "depth_rmse";
      t.higher_is_better = false;
      for (int p = 0; p < kNumParts; ++p)
        add_row(std::string(part_name(p)), [p](const MetricsReport& r) {
          return r.depth ? r.depth->rmse[static_cast<size_t>(p)] : kMetricMissing;
        });
      add_row("Mean Body Parts", [](const MetricsReport& r) {
        return r.depth ? r.depth->mean_body_parts : kMetricMissing;
      });
      add_row("Mean Full Body", [](const MetricsReport& r) {
        return r.depth ? r.depth->mean_full_body : kMetricMissing;
      });
      break;
    case Task::Pose3D:
      t.metric = "mjd";
      t.higher_is_better = false;
      for (int j : mjd_table_joints())
        add_row(std::string(joint_name(j)), [j](const MetricsReport& r) {
          return r.pose3d ? r.pose3d->mjd[static_cast<size_t>(j)] : kMetricMissing;
        });
      add_row("Mean", [](const MetricsReport& r) {
        return r.pose3d ? r.pose3d->mean : kMetricMissing;
      });
      break;
  }
  return t;
}

}  // namespace mth
