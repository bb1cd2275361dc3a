#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mth/core/rng.hpp"

namespace mth {

enum class Split { Train, Test };

inline std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("manifest: unknown split \"" + s + "\"");
}

struct ManifestEntry {
  std::string subject_id;
  std::string clip_id;
  std::string frame_path;  // path prefix relative to the dataset root
  Split split = Split::Train;
};

struct DatasetManifest {
  std::string kind = "surreal-format";  // or "synthetic"
  std::vector<ManifestEntry> entries;

  size_t count(Split s) const {
    size_t n = 0;
    for (const auto& e : entries) n += e.split == s ? 1 : 0;
    return n;
  }

  void write(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot write " + path);
    f << "# kind=" << kind << "\n";
    f << "# subject_id, clip_id, frame_path, split\n";
    for (const auto& e : entries)
      f << e.subject_id << "," << e.clip_id << "," << e.frame_path << ","
        << split_name(e.split) << "\n";
  }

  static DatasetManifest read(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot read " + path);
    DatasetManifest m;
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      if (line[0] == '#') {
        size_t k = line.find("kind=");
        if (k != std::string::npos) m.kind = line.substr(k + 5);
        continue;
      }
      std::istringstream is(line);
      std::string field;
      std::vector<std::string> fields;
      while (std::getline(is, field, ',')) {
        size_t a = field.find_first_not_of(" \t");
        size_t b = field.find_last_not_of(" \t\r");
        fields.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
      }
      if (fields.size() != 4)
        throw std::runtime_error("manifest: malformed line: " + line);
      m.entries.push_back({fields[0], fields[1], fields[2], parse_split(fields[3])});
    }
    return m;
  }
};

/// Subject-disjoint split assignment: round(test_fraction * #subjects)
/// subjects go to test, chosen by a seeded shuffle of the subjects in
/// first-appearance order.
inline DatasetManifest make_splits(DatasetManifest manifest, uint64_t seed,
                                   double test_fraction = 0.2) {
  if (test_fraction < 0 || test_fraction > 1)
    throw std::invalid_argument("make_splits: fraction out of range");
  std::vector<std::string> subjects;
  for (const auto& e : manifest.entries) {
    bool known = false;
    for (const auto& s : subjects) known = known || s == e.subject_id;
    if (!known) subjects.push_back(e.subject_id);
  }
  Rng rng(derive_seed(seed, "splits"));
  rng.shuffle(subjects);
  size_t n_test = static_cast<size_t>(
      std::llround(test_fraction * static_cast<double>(subjects.size())));
  std::map<std::string, Split> assign;
  for (size_t i = 0; i < subjects.size(); ++i)
    assign[subjects[i]] = i < n_test ? Split::Test : Split::Train;
  for (auto& e : manifest.entries) e.split = assign.at(e.subject_id);
  return manifest;
}

}  // namespace mth
