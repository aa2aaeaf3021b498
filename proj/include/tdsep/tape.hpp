// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tdsep/audio.hpp"
#include "tdsep/kernelfeat.hpp"
#include "tdsep/tensor.hpp"

namespace tdsep {

// Reverse-mode tape over the fixed op set used by the separation models.
// One tape per forward pass; node ids index into the recording. Gradients
// are populated by backward() for every node on the path to the loss with
// requires_grad set (leaves) or inherited from a parent.
class Tape {
 public:
  int leaf(Tensor value, bool requires_grad);

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& grad(int id) const;
  bool has_grad(int id) const { return !nodes_[id].grad.data.empty(); }

  // Scalar node required (shape [1]). Seeds with 1 and replays the tape.
  void backward(int loss_id);

  // x: [B, Cin, T]; w: [Cout, Cin/groups, K]; optional bias [Cout].
  // Symmetric zero padding pad on both sides.
  int conv1d(int x, int w, int bias, int stride, int dilation, int groups,
             int pad);
  // x: [B, N, F]; w: [N, L]; output [B, 1, (F-1)*stride + L].
  int conv_transpose1d(int x, int w, int stride);

  int relu(int x);
  int sigmoid(int x);
  // alpha: [C], slope per channel for negative inputs.
  int prelu(int x, int alpha);

  // Normalizes over batch x time per channel. In training mode batch
  // statistics are used; running stats (if non-null) are updated in place
  // as a side effect. In inference mode running stats are required.
  int batch_norm(int x, int gamma, int beta, Tensor* running_mean,
                 Tensor* running_var, bool training, double momentum,
                 double eps);
  // Normalizes over channels x time per batch item (gLN).
  int global_layer_norm(int x, int gamma, int beta, double eps);

  int concat_channels(const std::vector<int>& xs);
  int slice_channels(int x, int c0, int c1);
  int slice_time(int x, int t0, int t1);
  int mul(int a, int b);
  int add(int a, int b);

  // Learnable kernel-IPD features for a batch of multichannel waveforms.
  // Exactly one of (k_re, k_im) or window is a tape node, per mode.
  // Output: [B, D, frames] with D = (1 + include_sin) * pairs * bins.
  int kernel_ipd(std::shared_ptr<const std::vector<MultichannelAudio>> audio,
                 const KernelBank& bank_template, int k_re, int k_im,
                 int window, std::vector<MicPair> pairs, bool include_sin);

  // Mean over (batch, speaker) of the negative SI-SNR between estimate
  // est[perm[b][c]] and refs[b][c], trimmed to the shorter length. The
  // permutation is fixed by the caller (chosen by value via pit_wrap).
  // est nodes: C tensors [B, 1, S]. Returns a scalar node.
  int neg_si_snr_loss(const std::vector<int>& est_nodes,
                      std::shared_ptr<const std::vector<std::vector<std::vector<double>>>> refs,
                      std::vector<std::vector<int>> perm);

  // Sum of squared differences between mask * ymag and the (constant)
  // truncated phase-sensitive targets, summed over speakers with the given
  // permutation. mask nodes: C tensors [B, bins, F].
  int psa_loss_node(const std::vector<int>& mask_nodes,
                    std::shared_ptr<const Tensor> ymag,
                    std::shared_ptr<const std::vector<Tensor>> targets,
                    std::vector<int> perm);

  size_t num_nodes() const { return nodes_.size(); }
  // Index of the first node whose value contains a non-finite entry, or -1.
  int first_non_finite() const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> backward_fn;
  };

  int push(Tensor value, bool requires_grad, std::function<void()> fn);
  Tensor& grad_buffer(int id);
  void accumulate(int id, const Tensor& g);

  std::vector<Node> nodes_;
};

}  // namespace tdsep
