// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tdsep/tape.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace tdsep {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void check_rank3(const Tensor& t, const char* who) {
  if (t.rank() != 3) throw DataError(std::string(who) + ": expected rank-3");
}

constexpr double kLog10Factor = 4.342944819032518;  // 10 / ln(10)
constexpr double kNoiseFloorRatio = 1e-12;
constexpr double kTiny = 1e-300;

}  // namespace

int Tape::push(Tensor value, bool requires_grad, std::function<void()> fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backward_fn = std::move(fn);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

const Tensor& Tape::grad(int id) const {
  if (nodes_[id].grad.data.empty()) {
    throw DataError("tape: gradient not populated for node");
  }
  return nodes_[id].grad;
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) {
    n.grad = Tensor(n.value.shape);
  }
  return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  Tensor& buf = grad_buffer(id);
  for (size_t i = 0; i < buf.data.size(); ++i) buf.data[i] += g.data[i];
}

void Tape::backward(int loss_id) {
  const Tensor& loss = nodes_[loss_id].value;
  if (loss.size() != 1) throw DataError("backward: loss must be scalar");
  grad_buffer(loss_id).data[0] = 1.0;
  for (int id = loss_id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty() || !n.backward_fn) continue;
    n.backward_fn();
  }
}

int Tape::first_non_finite() const {
  for (size_t id = 0; id < nodes_.size(); ++id) {
    for (double v : nodes_[id].value.data) {
      if (!std::isfinite(v)) return static_cast<int>(id);
    }
  }
  return -1;
}

int Tape::conv1d(int x, int w, int bias, int stride, int dilation, int groups,
                 int pad) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  check_rank3(xv, "conv1d input");
  if (wv.rank() != 3) throw DataError("conv1d: weight must be rank-3");
  if (stride < 1 || dilation < 1 || groups < 1 || pad < 0) {
    throw ConfigError("conv1d: bad hyperparameters");
  }
  const int B = xv.dim(0), Cin = xv.dim(1), T = xv.dim(2);
  const int Cout = wv.dim(0), Cpg = wv.dim(1), K = wv.dim(2);
  if (Cin % groups != 0 || Cout % groups != 0 || Cpg != Cin / groups) {
    throw DataError("conv1d: channel/group mismatch");
  }
  const int span = dilation * (K - 1) + 1;
  const int To = (T + 2 * pad - span) / stride + 1;
  if (To < 1) throw DataError("conv1d: input too short");
  const bool has_bias = bias >= 0;
  if (has_bias && nodes_[bias].value.size() != Cout) {
    throw DataError("conv1d: bias shape");
  }

  Tensor out({B, Cout, To});
  const bool pointwise =
      K == 1 && stride == 1 && dilation == 1 && groups == 1 && pad == 0;
  const bool depthwise = groups == Cin && Cout == Cin && Cpg == 1;

  if (pointwise) {
    ConstMap W(wv.data.data(), Cout, Cin);
    for (int b = 0; b < B; ++b) {
      ConstMap X(xv.data.data() + static_cast<size_t>(b) * Cin * T, Cin, T);
      MutMap(out.data.data() + static_cast<size_t>(b) * Cout * To, Cout, To)
          .noalias() = W * X;
    }
  } else if (depthwise) {
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < Cin; ++c) {
        const double* xrow = &xv.data[(static_cast<size_t>(b) * Cin + c) * T];
        const double* wrow = &wv.data[static_cast<size_t>(c) * K];
        double* orow = &out.data[(static_cast<size_t>(b) * Cin + c) * To];
        for (int t = 0; t < To; ++t) {
          const int start = t * stride - pad;
          double acc = 0.0;
          for (int k = 0; k < K; ++k) {
            const int ti = start + k * dilation;
            if (ti >= 0 && ti < T) acc += xrow[ti] * wrow[k];
          }
          orow[t] = acc;
        }
      }
    }
  } else {
    const int Copg = Cout / groups;
    RowMat cols(Cpg * K, To);
    for (int b = 0; b < B; ++b) {
      for (int g = 0; g < groups; ++g) {
        for (int c = 0; c < Cpg; ++c) {
          const double* xrow =
              &xv.data[(static_cast<size_t>(b) * Cin + g * Cpg + c) * T];
          for (int k = 0; k < K; ++k) {
            double* crow = cols.data() + (static_cast<size_t>(c) * K + k) * To;
            for (int t = 0; t < To; ++t) {
              const int ti = t * stride - pad + k * dilation;
              crow[t] = (ti >= 0 && ti < T) ? xrow[ti] : 0.0;
            }
          }
        }
        ConstMap Wg(wv.data.data() + static_cast<size_t>(g) * Copg * Cpg * K,
                    Copg, Cpg * K);
        MutMap(out.data.data() +
                   (static_cast<size_t>(b) * Cout + g * Copg) * To,
               Copg, To)
            .noalias() = Wg * cols;
      }
    }
  }
  if (has_bias) {
    const Tensor& bv = nodes_[bias].value;
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < Cout; ++c) {
        double* orow = &out.data[(static_cast<size_t>(b) * Cout + c) * To];
        const double bc = bv.data[c];
        for (int t = 0; t < To; ++t) orow[t] += bc;
      }
    }
  }

  const bool rg = nodes_[x].requires_grad || nodes_[w].requires_grad ||
                  (has_bias && nodes_[bias].requires_grad);
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, x, w, bias, stride, dilation, groups,
                            pad, B, Cin, T, Cout, Cpg, K, To, pointwise,
                            depthwise, has_bias]() {
    const Tensor& g = nodes_[id].grad;
    const Tensor& xv = nodes_[x].value;
    const Tensor& wv = nodes_[w].value;
    Tensor* gx = nodes_[x].requires_grad ? &grad_buffer(x) : nullptr;
    Tensor* gw = nodes_[w].requires_grad ? &grad_buffer(w) : nullptr;
    Tensor* gb = has_bias && nodes_[bias].requires_grad ? &grad_buffer(bias)
                                                        : nullptr;
    if (gb) {
      for (int b = 0; b < B; ++b) {
        for (int c = 0; c < Cout; ++c) {
          const double* grow =
              &g.data[(static_cast<size_t>(b) * Cout + c) * To];
          double acc = 0.0;
          for (int t = 0; t < To; ++t) acc += grow[t];
          gb->data[c] += acc;
        }
      }
    }
    if (pointwise) {
      ConstMap W(wv.data.data(), Cout, Cin);
      for (int b = 0; b < B; ++b) {
        ConstMap G(g.data.data() + static_cast<size_t>(b) * Cout * To, Cout,
                   To);
        ConstMap X(xv.data.data() + static_cast<size_t>(b) * Cin * T, Cin, T);
        if (gx) {
          MutMap(gx->data.data() + static_cast<size_t>(b) * Cin * T, Cin, T)
              .noalias() += W.transpose() * G;
        }
        if (gw) {
          MutMap(gw->data.data(), Cout, Cin).noalias() += G * X.transpose();
        }
      }
    } else if (depthwise) {
      for (int b = 0; b < B; ++b) {
        for (int c = 0; c < Cin; ++c) {
          const double* xrow =
              &xv.data[(static_cast<size_t>(b) * Cin + c) * T];
          const double* wrow = &wv.data[static_cast<size_t>(c) * K];
          const double* grow =
              &g.data[(static_cast<size_t>(b) * Cin + c) * To];
          for (int t = 0; t < To; ++t) {
            const int start = t * stride - pad;
            const double gv = grow[t];
            for (int k = 0; k < K; ++k) {
              const int ti = start + k * dilation;
              if (ti < 0 || ti >= T) continue;
              if (gx) {
                gx->data[(static_cast<size_t>(b) * Cin + c) * T + ti] +=
                    gv * wrow[k];
              }
              if (gw) {
                gw->data[static_cast<size_t>(c) * K + k] += gv * xrow[ti];
              }
            }
          }
        }
      }
    } else {
      const int Copg = Cout / groups;
      RowMat cols(Cpg * K, To);
      RowMat gcols(Cpg * K, To);
      for (int b = 0; b < B; ++b) {
        for (int gi = 0; gi < groups; ++gi) {
          if (gw) {
            for (int c = 0; c < Cpg; ++c) {
              const double* xrow =
                  &xv.data[(static_cast<size_t>(b) * Cin + gi * Cpg + c) * T];
              for (int k = 0; k < K; ++k) {
                double* crow =
                    cols.data() + (static_cast<size_t>(c) * K + k) * To;
                for (int t = 0; t < To; ++t) {
                  const int ti = t * stride - pad + k * dilation;
                  crow[t] = (ti >= 0 && ti < T) ? xrow[ti] : 0.0;
                }
              }
            }
          }
          ConstMap G(g.data.data() +
                         (static_cast<size_t>(b) * Cout + gi * Copg) * To,
                     Copg, To);
          if (gw) {
            MutMap(gw->data.data() + static_cast<size_t>(gi) * Copg * Cpg * K,
                   Copg, Cpg * K)
                .noalias() += G * cols.transpose();
          }
          if (gx) {
            ConstMap Wg(wv.data.data() +
                            static_cast<size_t>(gi) * Copg * Cpg * K,
                        Copg, Cpg * K);
            gcols.noalias() = Wg.transpose() * G;
            for (int c = 0; c < Cpg; ++c) {
              double* gxrow =
                  &gx->data[(static_cast<size_t>(b) * Cin + gi * Cpg + c) * T];
              for (int k = 0; k < K; ++k) {
                const double* crow =
                    gcols.data() + (static_cast<size_t>(c) * K + k) * To;
                for (int t = 0; t < To; ++t) {
                  const int ti = t * stride - pad + k * dilation;
                  if (ti >= 0 && ti < T) gxrow[ti] += crow[t];
                }
              }
            }
          }
        }
      }
    }
  };
  return id;
}

int Tape::conv_transpose1d(int x, int w, int stride) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  check_rank3(xv, "conv_transpose1d input");
  if (wv.rank() != 2) {
    throw DataError("conv_transpose1d: weight must be [N, L]");
  }
  if (stride < 1) throw ConfigError("conv_transpose1d: bad stride");
  const int B = xv.dim(0), N = xv.dim(1), F = xv.dim(2);
  if (wv.dim(0) != N) throw DataError("conv_transpose1d: channel mismatch");
  const int L = wv.dim(1);
  const int S = (F - 1) * stride + L;

  Tensor out({B, 1, S});
  for (int b = 0; b < B; ++b) {
    double* orow = &out.data[static_cast<size_t>(b) * S];
    for (int f = 0; f < F; ++f) {
      double* seg = orow + static_cast<size_t>(f) * stride;
      for (int n = 0; n < N; ++n) {
        const double xval = xv.at(b, n, f);
        if (xval == 0.0) continue;
        const double* wrow = &wv.data[static_cast<size_t>(n) * L];
        for (int l = 0; l < L; ++l) seg[l] += xval * wrow[l];
      }
    }
  }

  const bool rg = nodes_[x].requires_grad || nodes_[w].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, x, w, stride, B, N, F, L, S]() {
    const Tensor& g = nodes_[id].grad;
    const Tensor& xv = nodes_[x].value;
    const Tensor& wv = nodes_[w].value;
    Tensor* gx = nodes_[x].requires_grad ? &grad_buffer(x) : nullptr;
    Tensor* gw = nodes_[w].requires_grad ? &grad_buffer(w) : nullptr;
    for (int b = 0; b < B; ++b) {
      const double* grow = &g.data[static_cast<size_t>(b) * S];
      for (int f = 0; f < F; ++f) {
        const double* seg = grow + static_cast<size_t>(f) * stride;
        for (int n = 0; n < N; ++n) {
          const double* wrow = &wv.data[static_cast<size_t>(n) * L];
          if (gx) {
            double acc = 0.0;
            for (int l = 0; l < L; ++l) acc += seg[l] * wrow[l];
            gx->at(b, n, f) += acc;
          }
          if (gw) {
            const double xval = xv.at(b, n, f);
            if (xval != 0.0) {
              double* gwrow = &gw->data[static_cast<size_t>(n) * L];
              for (int l = 0; l < L; ++l) gwrow[l] += xval * seg[l];
            }
          }
        }
      }
    }
  };
  return id;
}

int Tape::relu(int x) {
  const Tensor& xv = nodes_[x].value;
  Tensor out(xv.shape);
  for (size_t i = 0; i < xv.data.size(); ++i) {
    out.data[i] = xv.data[i] > 0.0 ? xv.data[i] : 0.0;
  }
  const bool rg = nodes_[x].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, x]() {
    const Tensor& g = nodes_[id].grad;
    const Tensor& xv = nodes_[x].value;
    Tensor& gx = grad_buffer(x);
    for (size_t i = 0; i < g.data.size(); ++i) {
      if (xv.data[i] > 0.0) gx.data[i] += g.data[i];
    }
  };
  return id;
}

int Tape::sigmoid(int x) {
  const Tensor& xv = nodes_[x].value;
  Tensor out(xv.shape);
  for (size_t i = 0; i < xv.data.size(); ++i) {
    out.data[i] = 1.0 / (1.0 + std::exp(-xv.data[i]));
  }
  const bool rg = nodes_[x].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, x]() {
    const Tensor& g = nodes_[id].grad;
    const Tensor& yv = nodes_[id].value;
    Tensor& gx = grad_buffer(x);
    for (size_t i = 0; i < g.data.size(); ++i) {
      gx.data[i] += g.data[i] * yv.data[i] * (1.0 - yv.data[i]);
    }
  };
  return id;
}

int Tape::prelu(int x, int alpha) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& av = nodes_[alpha].value;
  check_rank3(xv, "prelu input");
  const int B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
  if (av.size() != C) throw DataError("prelu: alpha shape mismatch");
  Tensor out(xv.shape);
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const double a = av.data[c];
      const double* xrow = &xv.data[(static_cast<size_t>(b) * C + c) * T];
      double* orow = &out.data[(static_cast<size_t>(b) * C + c) * T];
      for (int t = 0; t < T; ++t) {
        orow[t] = xrow[t] > 0.0 ? xrow[t] : a * xrow[t];
      }
    }
  }
  const bool rg = nodes_[x].requires_grad || nodes_[alpha].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, x, alpha, B, C, T]() {
    const Tensor& g = nodes_[id].grad;
    const Tensor& xv = nodes_[x].value;
    const Tensor& av = nodes_[alpha].value;
    Tensor* gx = nodes_[x].requires_grad ? &grad_buffer(x) : nullptr;
    Tensor* ga = nodes_[alpha].requires_grad ? &grad_buffer(alpha) : nullptr;
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < C; ++c) {
        const double a = av.data[c];
        const size_t base = (static_cast<size_t>(b) * C + c) * T;
        double ga_acc = 0.0;
        for (int t = 0; t < T; ++t) {
          const double xval = xv.data[base + t];
          const double gval = g.data[base + t];
          if (gx) gx->data[base + t] += xval > 0.0 ? gval : a * gval;
          if (ga && xval <= 0.0) ga_acc += gval * xval;
        }
        if (ga) ga->data[c] += ga_acc;
      }
    }
  };
  return id;
}

int Tape::batch_norm(int x, int gamma, int beta, Tensor* running_mean,
                     Tensor* running_var, bool training, double momentum,
                     double eps) {
  const Tensor& xv = nodes_[x].value;
  check_rank3(xv, "batch_norm input");
  const int B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
  const Tensor& gv = nodes_[gamma].value;
  const Tensor& bv = nodes_[beta].value;
  if (gv.size() != C || bv.size() != C) {
    throw DataError("batch_norm: scale/offset shape mismatch");
  }
  const int64_t M = static_cast<int64_t>(B) * T;

  std::vector<double> mean(C, 0.0), var(C, 0.0);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* xrow = &xv.data[(static_cast<size_t>(b) * C + c) * T];
        for (int t = 0; t < T; ++t) acc += xrow[t];
      }
      mean[c] = acc / static_cast<double>(M);
      double vacc = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* xrow = &xv.data[(static_cast<size_t>(b) * C + c) * T];
        for (int t = 0; t < T; ++t) {
          const double d = xrow[t] - mean[c];
          vacc += d * d;
        }
      }
      var[c] = vacc / static_cast<double>(M);
    }
    if (running_mean && running_var) {
      for (int c = 0; c < C; ++c) {
        const double unbiased =
            M > 1 ? var[c] * static_cast<double>(M) / (M - 1) : var[c];
        running_mean->data[c] =
            (1.0 - momentum) * running_mean->data[c] + momentum * mean[c];
        running_var->data[c] =
            (1.0 - momentum) * running_var->data[c] + momentum * unbiased;
      }
    }
  } else {
    if (!running_mean || !running_var) {
      throw DataError("batch_norm: inference requires running statistics");
    }
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean->data[c];
      var[c] = running_var->data[c];
    }
  }

  std::vector<double> inv_std(C);
  for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor out(xv.shape);
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const size_t base = (static_cast<size_t>(b) * C + c) * T;
      const double m = mean[c], is = inv_std[c];
      const double ga = gv.data[c], be = bv.data[c];
      for (int t = 0; t < T; ++t) {
        out.data[base + t] = ga * (xv.data[base + t] - m) * is + be;
      }
    }
  }

  const bool rg = nodes_[x].requires_grad || nodes_[gamma].requires_grad ||
                  nodes_[beta].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, x, gamma, beta, B, C, T, M, training,
                            mean, inv_std]() {
    const Tensor& g = nodes_[id].grad;
    const Tensor& xv = nodes_[x].value;
    const Tensor& gv = nodes_[gamma].value;
    Tensor* gx = nodes_[x].requires_grad ? &grad_buffer(x) : nullptr;
    Tensor* gg = nodes_[gamma].requires_grad ? &grad_buffer(gamma) : nullptr;
    Tensor* gb = nodes_[beta].requires_grad ? &grad_buffer(beta) : nullptr;
    for (int c = 0; c < C; ++c) {
      const double m = mean[c], is = inv_std[c], ga = gv.data[c];
      double gsum = 0.0, gxhat = 0.0;
      for (int b = 0; b < B; ++b) {
        const size_t base = (static_cast<size_t>(b) * C + c) * T;
        for (int t = 0; t < T; ++t) {
          const double xh = (xv.data[base + t] - m) * is;
          gsum += g.data[base + t];
          gxhat += g.data[base + t] * xh;
        }
      }
      if (gg) gg->data[c] += gxhat;
      if (gb) gb->data[c] += gsum;
      if (gx) {
        const double inv_m = 1.0 / static_cast<double>(M);
        for (int b = 0; b < B; ++b) {
          const size_t base = (static_cast<size_t>(b) * C + c) * T;
          for (int t = 0; t < T; ++t) {
            const double xh = (xv.data[base + t] - m) * is;
            if (training) {
              gx->data[base + t] +=
                  ga * is *
                  (g.data[base + t] - gsum * inv_m - xh * gxhat * inv_m);
            } else {
              gx->data[base + t] += ga * is * g.data[base + t];
            }
          }
        }
      }
    }
  };
  return id;
}

int Tape::global_layer_norm(int x, int gamma, int beta, double eps) {
  const Tensor& xv = nodes_[x].value;
  check_rank3(xv, "global_layer_norm input");
  const int B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
  const Tensor& gv = nodes_[gamma].value;
  const Tensor& bv = nodes_[beta].value;
  if (gv.size() != C || bv.size() != C) {
    throw DataError("global_layer_norm: scale/offset shape mismatch");
  }
  const int64_t M = static_cast<int64_t>(C) * T;

  std::vector<double> mean(B, 0.0), inv_std(B, 0.0);
  for (int b = 0; b < B; ++b) {
    const size_t base = static_cast<size_t>(b) * C * T;
    double acc = 0.0;
    for (int64_t i = 0; i < M; ++i) acc += xv.data[base + i];
    mean[b] = acc / static_cast<double>(M);
    double vacc = 0.0;
    for (int64_t i = 0; i < M; ++i) {
      const double d = xv.data[base + i] - mean[b];
      vacc += d * d;
    }
    inv_std[b] = 1.0 / std::sqrt(vacc / static_cast<double>(M) + eps);
  }

  Tensor out(xv.shape);
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const size_t base = (static_cast<size_t>(b) * C + c) * T;
      const double ga = gv.data[c], be = bv.data[c];
      for (int t = 0; t < T; ++t) {
        out.data[base + t] =
            ga * (xv.data[base + t] - mean[b]) * inv_std[b] + be;
      }
    }
  }

  const bool rg = nodes_[x].requires_grad || nodes_[gamma].requires_grad ||
                  nodes_[beta].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, x, gamma, beta, B, C, T, M, mean,
                            inv_std]() {
    const Tensor& g = nodes_[id].grad;
    const Tensor& xv = nodes_[x].value;
    const Tensor& gv = nodes_[gamma].value;
    Tensor* gx = nodes_[x].requires_grad ? &grad_buffer(x) : nullptr;
    Tensor* gg = nodes_[gamma].requires_grad ? &grad_buffer(gamma) : nullptr;
    Tensor* gb = nodes_[beta].requires_grad ? &grad_buffer(beta) : nullptr;
    for (int b = 0; b < B; ++b) {
      const double m = mean[b], is = inv_std[b];
      double hsum = 0.0, hxhat = 0.0;
      for (int c = 0; c < C; ++c) {
        const size_t base = (static_cast<size_t>(b) * C + c) * T;
        const double ga = gv.data[c];
        for (int t = 0; t < T; ++t) {
          const double h = ga * g.data[base + t];
          const double xh = (xv.data[base + t] - m) * is;
          hsum += h;
          hxhat += h * xh;
        }
      }
      const double inv_m = 1.0 / static_cast<double>(M);
      for (int c = 0; c < C; ++c) {
        const size_t base = (static_cast<size_t>(b) * C + c) * T;
        const double ga = gv.data[c];
        for (int t = 0; t < T; ++t) {
          const double xh = (xv.data[base + t] - m) * is;
          const double h = ga * g.data[base + t];
          if (gx) {
            gx->data[base + t] += is * (h - hsum * inv_m - xh * hxhat * inv_m);
          }
          if (gg) gg->data[c] += g.data[base + t] * xh;
          if (gb) gb->data[c] += g.data[base + t];
        }
      }
    }
  };
  return id;
}

int Tape::concat_channels(const std::vector<int>& xs) {
  if (xs.empty()) throw DataError("concat_channels: no inputs");
  const Tensor& first = nodes_[xs[0]].value;
  check_rank3(first, "concat_channels input");
  const int B = first.dim(0), T = first.dim(2);
  int Ctot = 0;
  bool rg = false;
  for (int xid : xs) {
    const Tensor& v = nodes_[xid].value;
    check_rank3(v, "concat_channels input");
    if (v.dim(0) != B || v.dim(2) != T) {
      throw DataError("concat_channels: batch/time mismatch");
    }
    Ctot += v.dim(1);
    rg = rg || nodes_[xid].requires_grad;
  }
  Tensor out({B, Ctot, T});
  for (int b = 0; b < B; ++b) {
    int coff = 0;
    for (int xid : xs) {
      const Tensor& v = nodes_[xid].value;
      const int Ci = v.dim(1);
      std::copy(&v.data[static_cast<size_t>(b) * Ci * T],
                &v.data[static_cast<size_t>(b) * Ci * T] + static_cast<size_t>(Ci) * T,
                &out.data[(static_cast<size_t>(b) * Ctot + coff) * T]);
      coff += Ci;
    }
  }
  std::vector<int> inputs = xs;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, inputs, B, Ctot, T]() {
    const Tensor& g = nodes_[id].grad;
    for (int b = 0; b < B; ++b) {
      int coff = 0;
      for (int xid : inputs) {
        const int Ci = nodes_[xid].value.dim(1);
        if (nodes_[xid].requires_grad) {
          Tensor& gx = grad_buffer(xid);
          const double* src = &g.data[(static_cast<size_t>(b) * Ctot + coff) * T];
          double* dst = &gx.data[static_cast<size_t>(b) * Ci * T];
          for (int64_t i = 0; i < static_cast<int64_t>(Ci) * T; ++i) {
            dst[i] += src[i];
          }
        }
        coff += Ci;
      }
    }
  };
  return id;
}

int Tape::slice_channels(int x, int c0, int c1) {
  const Tensor& xv = nodes_[x].value;
  check_rank3(xv, "slice_channels input");
  const int B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
  if (c0 < 0 || c1 > C || c0 >= c1) throw DataError("slice_channels: bad range");
  const int Cs = c1 - c0;
  Tensor out({B, Cs, T});
  for (int b = 0; b < B; ++b) {
    std::copy(&xv.data[(static_cast<size_t>(b) * C + c0) * T],
              &xv.data[(static_cast<size_t>(b) * C + c0) * T] +
                  static_cast<size_t>(Cs) * T,
              &out.data[static_cast<size_t>(b) * Cs * T]);
  }
  const bool rg = nodes_[x].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, x, c0, B, C, T, Cs]() {
    const Tensor& g = nodes_[id].grad;
    Tensor& gx = grad_buffer(x);
    for (int b = 0; b < B; ++b) {
      const double* src = &g.data[static_cast<size_t>(b) * Cs * T];
      double* dst = &gx.data[(static_cast<size_t>(b) * C + c0) * T];
      for (int64_t i = 0; i < static_cast<int64_t>(Cs) * T; ++i) {
        dst[i] += src[i];
      }
    }
  };
  return id;
}

int Tape::slice_time(int x, int t0, int t1) {
  const Tensor& xv = nodes_[x].value;
  check_rank3(xv, "slice_time input");
  const int B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
  if (t0 < 0 || t1 > T || t0 >= t1) throw DataError("slice_time: bad range");
  const int Ts = t1 - t0;
  Tensor out({B, C, Ts});
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      std::copy(&xv.data[(static_cast<size_t>(b) * C + c) * T + t0],
                &xv.data[(static_cast<size_t>(b) * C + c) * T + t1],
                &out.data[(static_cast<size_t>(b) * C + c) * Ts]);
    }
  }
  const bool rg = nodes_[x].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, x, t0, B, C, T, Ts]() {
    const Tensor& g = nodes_[id].grad;
    Tensor& gx = grad_buffer(x);
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < C; ++c) {
        const double* src = &g.data[(static_cast<size_t>(b) * C + c) * Ts];
        double* dst = &gx.data[(static_cast<size_t>(b) * C + c) * T + t0];
        for (int t = 0; t < Ts; ++t) dst[t] += src[t];
      }
    }
  };
  return id;
}

int Tape::mul(int a, int b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) throw DataError("mul: shape mismatch");
  Tensor out(av.shape);
  for (size_t i = 0; i < av.data.size(); ++i) {
    out.data[i] = av.data[i] * bv.data[i];
  }
  const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, a, b]() {
    const Tensor& g = nodes_[id].grad;
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    if (nodes_[a].requires_grad) {
      Tensor& ga = grad_buffer(a);
      for (size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] += g.data[i] * bv.data[i];
      }
    }
    if (nodes_[b].requires_grad) {
      Tensor& gb = grad_buffer(b);
      for (size_t i = 0; i < g.data.size(); ++i) {
        gb.data[i] += g.data[i] * av.data[i];
      }
    }
  };
  return id;
}

int Tape::add(int a, int b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) throw DataError("add: shape mismatch");
  Tensor out(av.shape);
  for (size_t i = 0; i < av.data.size(); ++i) {
    out.data[i] = av.data[i] + bv.data[i];
  }
  const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, a, b]() {
    const Tensor& g = nodes_[id].grad;
    if (nodes_[a].requires_grad) accumulate(a, g);
    if (nodes_[b].requires_grad) accumulate(b, g);
  };
  return id;
}

int Tape::kernel_ipd(
    std::shared_ptr<const std::vector<MultichannelAudio>> audio,
    const KernelBank& bank_template, int k_re, int k_im, int window,
    std::vector<MicPair> pairs, bool include_sin) {
  if (!audio || audio->empty()) throw DataError("kernel_ipd: empty batch");
  KernelBank bank = bank_template;
  if (window >= 0) {
    if (bank.mode != KernelMode::kWindowConstrained) {
      throw ConfigError("kernel_ipd: window node requires window mode");
    }
    bank.window = nodes_[window].value.data;
    bank.rebuild_from_window();
  } else {
    if (k_re < 0 || k_im < 0) {
      throw ConfigError("kernel_ipd: need k_re/k_im nodes");
    }
    bank.k_re = nodes_[k_re].value.data;
    bank.k_im = nodes_[k_im].value.data;
  }

  const int B = static_cast<int>(audio->size());
  const int D =
      (include_sin ? 2 : 1) * static_cast<int>(pairs.size()) * bank.num_bins;
  Tensor out;
  for (int b = 0; b < B; ++b) {
    const FeatureMap feats =
        cos_sin_features(ipd_from_kernels((*audio)[b], bank, pairs), include_sin);
    if (b == 0) out = Tensor({B, D, feats.num_frames});
    if (feats.dim != D || feats.num_frames != out.dim(2)) {
      throw DataError("kernel_ipd: inconsistent batch feature shapes");
    }
    for (int f = 0; f < feats.num_frames; ++f) {
      for (int d = 0; d < D; ++d) {
        out.at(b, d, f) = feats.values[feats.idx(f, d)];
      }
    }
  }

  const bool rg = (window >= 0 && nodes_[window].requires_grad) ||
                  (k_re >= 0 && nodes_[k_re].requires_grad) ||
                  (k_im >= 0 && nodes_[k_im].requires_grad);
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, audio, bank, k_re, k_im, window,
                            pairs = std::move(pairs), include_sin]() {
    const Tensor& g = nodes_[id].grad;
    const int B = g.dim(0), D = g.dim(1), F = g.dim(2);
    for (int b = 0; b < B; ++b) {
      FeatureMap upstream(F, D, static_cast<double>(bank.stride));
      bool any = false;
      for (int f = 0; f < F; ++f) {
        for (int d = 0; d < D; ++d) {
          const double v = g.at(b, d, f);
          upstream.values[upstream.idx(f, d)] = v;
          any = any || v != 0.0;
        }
      }
      if (!any) continue;
      const KernelGradient kg =
          kernel_backward((*audio)[b], bank, pairs, upstream);
      if (window >= 0) {
        Tensor& gw = grad_buffer(window);
        for (size_t i = 0; i < kg.g_window.size(); ++i) {
          gw.data[i] += kg.g_window[i];
        }
      } else {
        Tensor& gre = grad_buffer(k_re);
        Tensor& gim = grad_buffer(k_im);
        for (size_t i = 0; i < kg.g_re.size(); ++i) {
          gre.data[i] += kg.g_re[i];
          gim.data[i] += kg.g_im[i];
        }
      }
    }
  };
  return id;
}

int Tape::neg_si_snr_loss(
    const std::vector<int>& est_nodes,
    std::shared_ptr<const std::vector<std::vector<std::vector<double>>>> refs,
    std::vector<std::vector<int>> perm) {
  if (!refs || refs->empty()) throw DataError("neg_si_snr_loss: no references");
  const int B = static_cast<int>(refs->size());
  const int C = static_cast<int>(est_nodes.size());
  if (static_cast<int>((*refs)[0].size()) != C) {
    throw DataError("neg_si_snr_loss: speaker count mismatch");
  }
  for (int e : est_nodes) {
    const Tensor& v = nodes_[e].value;
    check_rank3(v, "neg_si_snr_loss estimate");
    if (v.dim(0) != B || v.dim(1) != 1) {
      throw DataError("neg_si_snr_loss: estimate shape mismatch");
    }
  }
  if (static_cast<int>(perm.size()) != B) {
    throw DataError("neg_si_snr_loss: permutation batch mismatch");
  }

  // Per-pair evaluation; beyond the trimmed length gradients are zero.
  auto eval_pair = [this, &refs](int est_id, int b, int c) {
    const Tensor& ev = nodes_[est_id].value;
    const std::vector<double>& ref = (*refs)[b][c];
    const int64_t S = std::min<int64_t>(ev.dim(2),
                                        static_cast<int64_t>(ref.size()));
    const double* est = &ev.data[static_cast<size_t>(b) * ev.dim(2)];
    double est_mean = 0.0, ref_mean = 0.0;
    for (int64_t t = 0; t < S; ++t) {
      est_mean += est[t];
      ref_mean += ref[t];
    }
    est_mean /= static_cast<double>(S);
    ref_mean /= static_cast<double>(S);
    double dot = 0.0, ref_en = 0.0;
    for (int64_t t = 0; t < S; ++t) {
      dot += (est[t] - est_mean) * (ref[t] - ref_mean);
      ref_en += (ref[t] - ref_mean) * (ref[t] - ref_mean);
    }
    const double alpha = ref_en > 0.0 ? dot / ref_en : 0.0;
    double e2 = 0.0;
    for (int64_t t = 0; t < S; ++t) {
      const double r = (est[t] - est_mean) - alpha * (ref[t] - ref_mean);
      e2 += r * r;
    }
    const double A = alpha * alpha * ref_en;
    const double Bq = e2 + kNoiseFloorRatio * A;
    struct PairStats {
      double alpha, A, B;
      int64_t S;
      double est_mean, ref_mean;
    };
    return PairStats{alpha, A, Bq, S, est_mean, ref_mean};
  };

  double loss_sum = 0.0;
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const auto st = eval_pair(est_nodes[perm[b][c]], b, c);
      loss_sum -= kLog10Factor * (std::log(std::max(st.A, kTiny)) -
                                  std::log(st.B + kTiny));
    }
  }
  Tensor out({1});
  out.data[0] = loss_sum / (static_cast<double>(B) * C);

  bool rg = false;
  for (int e : est_nodes) rg = rg || nodes_[e].requires_grad;
  std::vector<int> ests = est_nodes;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, ests, refs, perm, B, C]() {
    const double gscale =
        nodes_[id].grad.data[0] / (static_cast<double>(B) * C);
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < C; ++c) {
        const int est_id = ests[perm[b][c]];
        if (!nodes_[est_id].requires_grad) continue;
        const Tensor& ev = nodes_[est_id].value;
        const std::vector<double>& ref = (*refs)[b][c];
        const int64_t Sfull = ev.dim(2);
        const int64_t S = std::min<int64_t>(Sfull,
                                            static_cast<int64_t>(ref.size()));
        const double* est = &ev.data[static_cast<size_t>(b) * Sfull];
        double est_mean = 0.0, ref_mean = 0.0;
        for (int64_t t = 0; t < S; ++t) {
          est_mean += est[t];
          ref_mean += ref[t];
        }
        est_mean /= static_cast<double>(S);
        ref_mean /= static_cast<double>(S);
        double dot = 0.0, ref_en = 0.0;
        for (int64_t t = 0; t < S; ++t) {
          dot += (est[t] - est_mean) * (ref[t] - ref_mean);
          ref_en += (ref[t] - ref_mean) * (ref[t] - ref_mean);
        }
        const double alpha = ref_en > 0.0 ? dot / ref_en : 0.0;
        double e2 = 0.0;
        for (int64_t t = 0; t < S; ++t) {
          const double r = (est[t] - est_mean) - alpha * (ref[t] - ref_mean);
          e2 += r * r;
        }
        const double A = alpha * alpha * ref_en;
        const double Bq = e2 + kNoiseFloorRatio * A + kTiny;
        // d(-term)/dA and d(-term)/d(e2); the noise floor contributes to B.
        const double dA =
            A > kTiny
                ? gscale * kLog10Factor * (kNoiseFloorRatio / Bq - 1.0 / A)
                : 0.0;
        const double dE2 = gscale * kLog10Factor / Bq;
        // dA/dest = 2 alpha (ref - ref_mean); de2/dest = 2 resid, followed
        // by the zero-mean projection of the combined gradient.
        std::vector<double> grow(S);
        double gmean = 0.0;
        for (int64_t t = 0; t < S; ++t) {
          const double rzm = ref[t] - ref_mean;
          const double resid = (est[t] - est_mean) - alpha * rzm;
          const double gv = dA * 2.0 * alpha * rzm + dE2 * 2.0 * resid;
          grow[t] = gv;
          gmean += gv;
        }
        gmean /= static_cast<double>(S);
        Tensor& gx = grad_buffer(est_id);
        double* dst = &gx.data[static_cast<size_t>(b) * Sfull];
        for (int64_t t = 0; t < S; ++t) dst[t] += grow[t] - gmean;
      }
    }
  };
  return id;
}

int Tape::psa_loss_node(const std::vector<int>& mask_nodes,
                        std::shared_ptr<const Tensor> ymag,
                        std::shared_ptr<const std::vector<Tensor>> targets,
                        std::vector<int> perm) {
  if (!ymag || !targets) throw DataError("psa_loss_node: null constants");
  const int C = static_cast<int>(mask_nodes.size());
  if (static_cast<int>(targets->size()) != C ||
      static_cast<int>(perm.size()) != C) {
    throw DataError("psa_loss_node: speaker count mismatch");
  }
  for (int m : mask_nodes) {
    if (!nodes_[m].value.same_shape(*ymag)) {
      throw DataError("psa_loss_node: mask/ymag shape mismatch");
    }
  }
  double loss = 0.0;
  for (int r = 0; r < C; ++r) {
    const Tensor& mv = nodes_[mask_nodes[perm[r]]].value;
    const Tensor& tv = (*targets)[r];
    for (size_t i = 0; i < mv.data.size(); ++i) {
      const double d = mv.data[i] * ymag->data[i] - tv.data[i];
      loss += d * d;
    }
  }
  Tensor out({1});
  out.data[0] = loss;
  bool rg = false;
  for (int m : mask_nodes) rg = rg || nodes_[m].requires_grad;
  std::vector<int> masks = mask_nodes;
  const int id = push(std::move(out), rg, nullptr);
  if (!rg) return id;
  nodes_[id].backward_fn = [this, id, masks, ymag, targets, perm, C]() {
    const double gs = nodes_[id].grad.data[0];
    for (int r = 0; r < C; ++r) {
      const int mid = masks[perm[r]];
      if (!nodes_[mid].requires_grad) continue;
      const Tensor& mv = nodes_[mid].value;
      const Tensor& tv = (*targets)[r];
      Tensor& gm = grad_buffer(mid);
      for (size_t i = 0; i < mv.data.size(); ++i) {
        const double y = ymag->data[i];
        gm.data[i] += gs * 2.0 * (mv.data[i] * y - tv.data[i]) * y;
      }
    }
  };
  return id;
}

}  // namespace tdsep
