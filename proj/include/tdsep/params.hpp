// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tdsep/tensor.hpp"

namespace tdsep {

// Named model state. `params` are trainable; `buffers` hold non-trainable
// state such as normalization running statistics. std::map keeps iteration
// order deterministic, which the checkpoint byte layout relies on.
struct ParameterStore {
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> buffers;

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  Tensor& buffer(const std::string& name);
  const Tensor& buffer(const std::string& name) const;
  bool has_param(const std::string& name) const;
  int64_t num_scalars() const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global L2 clip; <= 0 disables clipping
};

// Adam with global-norm gradient clipping. Moment tensors are allocated
// lazily per parameter name on first update.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(AdamConfig config) : config_(config) {}

  // Applies one update using `grads` (keyed by parameter name; parameters
  // without an entry are left untouched). Clipping is computed over all
  // supplied gradients jointly before any update.
  void step(ParameterStore& store,
            const std::map<std::string, Tensor>& grads);

  const AdamConfig& config() const { return config_; }
  double last_grad_norm() const { return last_grad_norm_; }

  // Checkpoint plumbing.
  int64_t step_count() const { return step_count_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }
  void restore(int64_t step_count, std::map<std::string, Tensor> m,
               std::map<std::string, Tensor> v);

 private:
  AdamConfig config_;
  int64_t step_count_ = 0;
  double last_grad_norm_ = 0.0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

// Self-contained training snapshot. Serialization is byte-stable:
// save -> load -> save produces identical files.
struct Checkpoint {
  std::string config_json;  // configuration echo (canonical JSON text)
  int64_t epoch = 0;
  int64_t step = 0;
  ParameterStore store;
  bool has_optimizer = false;
  int64_t adam_step_count = 0;
  std::map<std::string, Tensor> adam_m;
  std::map<std::string, Tensor> adam_v;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tdsep
