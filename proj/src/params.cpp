// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/params.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace tdsep {

namespace {

constexpr char kMagic[8] = {'T', 'D', 'S', 'E', 'P', 'C', 'K', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw DataError("checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& data) {
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::vector<double>& data) {
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) throw DataError("checkpoint: truncated tensor payload");
}

nlohmann::json tensor_list_meta(const std::map<std::string, Tensor>& tensors) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, tensor] : tensors) {
    list.push_back({{"name", name}, {"shape", tensor.shape}});
  }
  return list;
}

std::map<std::string, Tensor> alloc_from_meta(const nlohmann::json& list) {
  std::map<std::string, Tensor> out;
  for (const auto& entry : list) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    out.emplace(name, Tensor(shape));
  }
  return out;
}

}  // namespace

Tensor& ParameterStore::param(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParameterStore::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParameterStore::buffer(const std::string& name) {
  auto it = buffers.find(name);
  if (it == buffers.end()) throw DataError("unknown buffer: " + name);
  return it->second;
}

const Tensor& ParameterStore::buffer(const std::string& name) const {
  auto it = buffers.find(name);
  if (it == buffers.end()) throw DataError("unknown buffer: " + name);
  return it->second;
}

bool ParameterStore::has_param(const std::string& name) const {
  return params.count(name) != 0;
}

int64_t ParameterStore::num_scalars() const {
  int64_t n = 0;
  for (const auto& [name, tensor] : params) n += tensor.size();
  return n;
}

void AdamOptimizer::step(ParameterStore& store,
                         const std::map<std::string, Tensor>& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.data) sq += v * v;
  }
  last_grad_norm_ = std::sqrt(sq);
  double scale = 1.0;
  if (config_.clip_norm > 0.0 && last_grad_norm_ > config_.clip_norm) {
    scale = config_.clip_norm / last_grad_norm_;
  }

  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (const auto& [name, g] : grads) {
    Tensor& p = store.param(name);
    if (!p.same_shape(g)) {
      throw DataError("optimizer: gradient shape mismatch for " + name);
    }
    Tensor& m = m_.emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = v_.emplace(name, Tensor(p.shape)).first->second;
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double gi = g.data[i] * scale;
      m.data[i] = config_.beta1 * m.data[i] + (1.0 - config_.beta1) * gi;
      v.data[i] = config_.beta2 * v.data[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void AdamOptimizer::restore(int64_t step_count, std::map<std::string, Tensor> m,
                            std::map<std::string, Tensor> v) {
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  // Keep the configuration as parsed JSON so the header stays canonical.
  header["config"] = ckpt.config_json.empty()
                         ? nlohmann::json(nullptr)
                         : nlohmann::json::parse(ckpt.config_json);
  header["epoch"] = ckpt.epoch;
  header["step"] = ckpt.step;
  header["params"] = tensor_list_meta(ckpt.store.params);
  header["buffers"] = tensor_list_meta(ckpt.store.buffers);
  header["optimizer"] = {{"present", ckpt.has_optimizer},
                         {"step_count", ckpt.adam_step_count},
                         {"m", tensor_list_meta(ckpt.adam_m)},
                         {"v", tensor_list_meta(ckpt.adam_v)}};
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, header_text.size());
  out.write(header_text.data(),
            static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, tensor] : ckpt.store.params) {
    write_doubles(out, tensor.data);
  }
  for (const auto& [name, tensor] : ckpt.store.buffers) {
    write_doubles(out, tensor.data);
  }
  for (const auto& [name, tensor] : ckpt.adam_m) write_doubles(out, tensor.data);
  for (const auto& [name, tensor] : ckpt.adam_v) write_doubles(out, tensor.data);
  if (!out) throw DataError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic: " + path);
  }
  const uint64_t header_len = read_u64(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: corrupt header: ") + e.what());
  }

  Checkpoint ckpt;
  if (!header.at("config").is_null()) {
    ckpt.config_json = header.at("config").dump();
  }
  ckpt.epoch = header.at("epoch").get<int64_t>();
  ckpt.step = header.at("step").get<int64_t>();
  ckpt.store.params = alloc_from_meta(header.at("params"));
  ckpt.store.buffers = alloc_from_meta(header.at("buffers"));
  const auto& opt = header.at("optimizer");
  ckpt.has_optimizer = opt.at("present").get<bool>();
  ckpt.adam_step_count = opt.at("step_count").get<int64_t>();
  ckpt.adam_m = alloc_from_meta(opt.at("m"));
  ckpt.adam_v = alloc_from_meta(opt.at("v"));

  for (auto& [name, tensor] : ckpt.store.params) read_doubles(in, tensor.data);
  for (auto& [name, tensor] : ckpt.store.buffers) read_doubles(in, tensor.data);
  for (auto& [name, tensor] : ckpt.adam_m) read_doubles(in, tensor.data);
  for (auto& [name, tensor] : ckpt.adam_v) read_doubles(in, tensor.data);
  return ckpt;
}

}  // namespace tdsep
