#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mth/nn/model.hpp"
#include "mth/train/rmsprop.hpp"

namespace mth {

inline std::string model_config_to_kv(const ModelConfig& c) {
  std::ostringstream os;
  os << "stacks=" << c.hg.stacks << "\nfeatures=" << c.hg.features
     << "\ndepth=" << c.hg.depth << "\nresolution=" << c.hg.resolution
     << "\ninput_resolution=" << c.hg.input_resolution << "\nbins=" << c.bins
     << "\njoints=" << c.joints << "\nparts=" << c.parts << "\n";
  return os.str();
}

inline ModelConfig model_config_from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.hg.stacks = std::stoi(kv.at("stacks"));
  c.hg.features = std::stoi(kv.at("features"));
  c.hg.depth = std::stoi(kv.at("depth"));
  c.hg.resolution = std::stoi(kv.at("resolution"));
  c.hg.input_resolution = std::stoi(kv.at("input_resolution"));
  c.bins = std::stoi(kv.at("bins"));
  c.joints = std::stoi(kv.at("joints"));
  c.parts = std::stoi(kv.at("parts"));
  return c;
}

struct CheckpointMeta {
  std::string task_set;
  ModelConfig model_config;
  uint64_t step = 0;
  uint64_t epoch = 0;
  uint64_t seed = 0;       // training seed; with (step, epoch) this fully
                           // determines every derived RNG stream on resume
  uint64_t init_seed = 0;  // model build seed

  std::string to_text() const {
    std::ostringstream os;
    os << "task_set=" << task_set << "\nstep=" << step << "\nepoch=" << epoch
       << "\nseed=" << seed << "\ninit_seed=" << init_seed << "\n"
       << model_config_to_kv(model_config);
    return os.str();
  }

  static CheckpointMeta from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      size_t eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    CheckpointMeta m;
    m.task_set = kv.at("task_set");
    m.step = std::stoull(kv.at("step"));
    m.epoch = std::stoull(kv.at("epoch"));
    m.seed = std::stoull(kv.at("seed"));
    m.init_seed = std::stoull(kv.at("init_seed"));
    m.model_config = model_config_from_kv(kv);
    return m;
  }
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'M', 'T', 'H', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void write_named_tensor(std::ostream& os, const std::string& name,
                               const Tensor<float>& t) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
  for (int d = 0; d < t.ndim(); ++d) write_pod<int32_t>(os, t.dim(d));
  write_pod<uint64_t>(os, static_cast<uint64_t>(t.numel() * sizeof(float)));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

inline std::pair<std::string, Tensor<float>> read_named_tensor(std::istream& is) {
  uint32_t name_len = read_pod<uint32_t>(is);
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  uint32_t ndim = read_pod<uint32_t>(is);
  std::vector<int> shape;
  for (uint32_t d = 0; d < ndim; ++d) shape.push_back(read_pod<int32_t>(is));
  uint64_t bytes = read_pod<uint64_t>(is);
  Tensor<float> t(shape);
  if (bytes != t.numel() * sizeof(float))
    throw std::runtime_error("checkpoint: corrupt tensor " + name);
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(bytes));
  if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
  return {name, std::move(t)};
}

}  // namespace detail

/// Single-archive checkpoint: meta record, then named parameter tensors in
/// store order, then optimizer accumulators. Saving a just-loaded state
/// reproduces the file byte for byte.
inline void save_checkpoint(const std::string& path,
                            const MultiTaskModel<float>& model,
                            const RmsProp* optimizer, const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write(detail::kCheckpointMagic, 8);
  std::string meta_text = meta.to_text();
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(meta_text.size()));
  os.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  const auto& params = model.params();
  uint64_t n = params.count() + (optimizer ? optimizer->count() : 0);
  detail::write_pod<uint64_t>(os, n);
  for (size_t i = 0; i < params.count(); ++i)
    detail::write_named_tensor(os, params.name(i), params.var(i).value());
  if (optimizer)
    for (size_t i = 0; i < params.count(); ++i)
      detail::write_named_tensor(os, "opt/" + params.name(i),
                                 optimizer->accumulator(i));
}

inline CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t meta_len = detail::read_pod<uint32_t>(is);
  std::string meta_text(meta_len, '\0');
  is.read(meta_text.data(), meta_len);
  if (!is) throw std::runtime_error("checkpoint: truncated meta in " + path);
  return CheckpointMeta::from_text(meta_text);
}

/// Restore parameters (and optimizer accumulators when given) into an
/// already-built model. The checkpoint's task set and config must match.
inline CheckpointMeta load_checkpoint(const std::string& path,
                                      MultiTaskModel<float>& model,
                                      RmsProp* optimizer) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t meta_len = detail::read_pod<uint32_t>(is);
  std::string meta_text(meta_len, '\0');
  is.read(meta_text.data(), meta_len);
  CheckpointMeta meta = CheckpointMeta::from_text(meta_text);
  if (meta.task_set != model.tasks().str())
    throw std::runtime_error("checkpoint: task set mismatch: file has \"" +
                             meta.task_set + "\", model has \"" +
                             model.tasks().str() + "\"");
  if (model_config_to_kv(meta.model_config) != model_config_to_kv(model.config()))
    throw std::runtime_error("checkpoint: model config mismatch for " + path);

  uint64_t n = detail::read_pod<uint64_t>(is);
  auto& params = model.params();
  uint64_t expected = params.count() + (optimizer ? params.count() : 0);
  if (optimizer) optimizer->attach(params);
  size_t loaded = 0;
  for (uint64_t i = 0; i < n; ++i) {
    auto [name, tensor] = detail::read_named_tensor(is);
    if (name.rfind("opt/", 0) == 0) {
      if (!optimizer) continue;  // evaluating without optimizer state
      std::string pname = name.substr(4);
      bool found = false;
      for (size_t pi = 0; pi < params.count(); ++pi)
        if (params.name(pi) == pname) {
          if (!optimizer->accumulator(pi).same_shape(tensor))
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
          optimizer->accumulator(pi) = std::move(tensor);
          found = true;
          ++loaded;
          break;
        }
      if (!found) throw std::runtime_error("checkpoint: unknown tensor " + name);
    } else {
      nn::Var<float>* v = params.find(name);
      if (!v) throw std::runtime_error("checkpoint: unknown tensor " + name);
      if (!v->value().same_shape(tensor))
        throw std::runtime_error("checkpoint: shape mismatch for " + name);
      v->value() = std::move(tensor);
      ++loaded;
    }
  }
  if (optimizer && loaded != expected)
    throw std::runtime_error("checkpoint: missing tensors in " + path);
  return meta;
}

}  // namespace mth
