// Copyright 2026 The rsnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rsnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "rsnn/kernels.hpp"

namespace rsnn::ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

Tape& tape_of(Var v) {
  if (!v.valid()) throw std::logic_error("op on an invalid variable");
  return *v.tape;
}

// Softmax rows of a [N,K] logits tensor in double.
std::vector<double> softmax_rows(const Tensor& logits, std::vector<double>* log_probs) {
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<double> p(static_cast<std::size_t>(n) * k);
  if (log_probs) log_probs->assign(p.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const float* row = logits.ptr() + static_cast<std::size_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double lz = std::log(z) + mx;
    for (int j = 0; j < k; ++j) {
      const double lp = static_cast<double>(row[j]) - lz;
      p[static_cast<std::size_t>(i) * k + j] = std::exp(lp);
      if (log_probs) (*log_probs)[static_cast<std::size_t>(i) * k + j] = lp;
    }
    if (!std::isfinite(lz)) throw NumericError("non-finite softmax normalizer");
  }
  return p;
}

}  // namespace

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) {
      Tensor ng = g;
      for (float& v : ng.data()) v = -v;
      t.accumulate(b, ng);
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      Tensor ga = g;
      const Tensor& bv = t.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= bv[i];
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor gb = g;
      const Tensor& av = t.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= av[i];
      t.accumulate(b, gb);
    }
  });
}

Var scale(Var a, float s) {
  Tensor out = a.value();
  for (float& v : out.data()) v *= s;
  return tape_of(a).record(std::move(out), {a}, [a, s](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (float& v : ga.data()) v *= s;
    t.accumulate(a, ga);
  });
}

Var mul_const(Var a, const Tensor& c) {
  require_same_shape(a.value(), c, "mul_const");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return tape_of(a).record(std::move(out), {a}, [a, c](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= c[i];
    t.accumulate(a, ga);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (float v : a.value().data()) s += v;
  return tape_of(a).record(Tensor::scalar(static_cast<float>(s)), {a},
                           [a](Tape& t, const Tensor& g) {
                             t.accumulate(a, Tensor(t.value(a).shape(), g[0]));
                           });
}

Var mean(Var a) {
  const float n = static_cast<float>(a.value().size());
  return scale(sum(a), 1.0f / n);
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = kernels::matmul(av, bv);
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (t.requires_grad(a)) {
      Tensor ga(av.shape());
      kernels::gemm_nt(m, k, n, g.ptr(), bv.ptr(), ga.ptr(), false);
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor gb(bv.shape());
      kernels::gemm_tn(k, n, m, av.ptr(), g.ptr(), gb.ptr(), false);
      t.accumulate(b, gb);
    }
  });
}

Var linear(Var x, Var w, std::optional<Var> b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1)) {
    throw ShapeError("linear: input " + shape_str(xv.shape()) + " incompatible with weight " +
                     shape_str(wv.shape()));
  }
  const int n = xv.dim(0), in = xv.dim(1), out_f = wv.dim(0);
  Tensor out({n, out_f});
  kernels::gemm_nt(n, out_f, in, xv.ptr(), wv.ptr(), out.ptr(), false);
  if (b) {
    const Tensor& bv = b->value();
    if (bv.size() != static_cast<std::size_t>(out_f)) throw ShapeError("linear: bias length");
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < out_f; ++j) out[static_cast<std::size_t>(i) * out_f + j] += bv[j];
    }
  }
  Tape& tape = tape_of(x);
  auto backward = [x, w, b](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const int n = xv.dim(0), in = xv.dim(1), out_f = wv.dim(0);
    if (t.requires_grad(x)) {
      Tensor gx(xv.shape());
      kernels::gemm_nn(n, in, out_f, g.ptr(), wv.ptr(), gx.ptr(), false);
      t.accumulate(x, gx);
    }
    if (t.requires_grad(w)) {
      Tensor gw(wv.shape());
      kernels::gemm_tn(out_f, in, n, g.ptr(), xv.ptr(), gw.ptr(), false);
      t.accumulate(w, gw);
    }
    if (b && t.requires_grad(*b)) {
      Tensor gb({out_f});
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < out_f; ++j) gb[j] += g[static_cast<std::size_t>(i) * out_f + j];
      }
      t.accumulate(*b, gb);
    }
  };
  if (b) return tape.record(std::move(out), {x, w, *b}, std::move(backward));
  return tape.record(std::move(out), {x, w}, std::move(backward));
}

Var conv2d(Var x, Var w, std::optional<Var> b, int stride, int padding) {
  Tensor out = kernels::conv2d(x.value(), w.value(), b ? b->value() : Tensor(), stride, padding);
  Tape& tape = tape_of(x);
  auto backward = [x, w, b, stride, padding](Tape& t, const Tensor& g) {
    const bool gb = b && t.requires_grad(*b);
    kernels::ConvGrads grads = kernels::conv2d_backward(
        g, t.value(x), t.value(w), stride, padding, t.requires_grad(x), t.requires_grad(w), gb);
    if (t.requires_grad(x)) t.accumulate(x, grads.input);
    if (t.requires_grad(w)) t.accumulate(w, grads.weight);
    if (gb) t.accumulate(*b, grads.bias);
  };
  if (b) return tape.record(std::move(out), {x, w, *b}, std::move(backward));
  return tape.record(std::move(out), {x, w}, std::move(backward));
}

Var avgpool2d(Var x, int k) {
  Tensor out = kernels::avgpool2d(x.value(), k);
  return tape_of(x).record(std::move(out), {x}, [x, k](Tape& t, const Tensor& g) {
    t.accumulate(x, kernels::avgpool2d_backward(g, t.value(x).shape(), k));
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, g.reshaped(t.value(x).shape()));
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (!(xv[i] > 0.0f)) gx[i] = 0.0f;
    }
    t.accumulate(x, gx);
  });
}

Var batch_norm(Var x, Var scale_v, Var shift_v, const Tensor& running_mean,
               const Tensor& running_var, const BatchNormOptions& opt, BatchStats* stats) {
  const Tensor& xv = x.value();
  if (xv.ndim() < 2) throw ShapeError("batch_norm needs [N,C,...] input");
  const int n = xv.dim(0), c = xv.dim(1);
  const std::size_t inner = xv.size() / (static_cast<std::size_t>(n) * c);
  const std::size_t count = static_cast<std::size_t>(n) * inner;
  const Tensor& gamma = scale_v.value();
  const Tensor& beta = shift_v.value();
  if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != static_cast<std::size_t>(c) ||
      running_mean.size() != static_cast<std::size_t>(c) ||
      running_var.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm parameter length does not match channels " + std::to_string(c));
  }

  std::vector<float> mean_c(static_cast<std::size_t>(c)), invstd(static_cast<std::size_t>(c));
  if (stats) {
    stats->mean.assign(static_cast<std::size_t>(c), 0.0);
    stats->unbiased_var.assign(static_cast<std::size_t>(c), 0.0);
  }
  if (opt.train) {
    if (count < 2) throw ShapeError("batch_norm train mode needs more than one value per channel");
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0, ss = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* p = xv.ptr() + (static_cast<std::size_t>(i) * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) s += p[j];
      }
      const double mu = s / static_cast<double>(count);
      for (int i = 0; i < n; ++i) {
        const float* p = xv.ptr() + (static_cast<std::size_t>(i) * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) {
          const double d = p[j] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean_c[ch] = static_cast<float>(mu);
      invstd[ch] = static_cast<float>(1.0 / std::sqrt(var + opt.eps));
      if (stats) {
        stats->mean[ch] = mu;
        stats->unbiased_var[ch] = ss / static_cast<double>(count - 1);
      }
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean_c[ch] = running_mean[ch];
      invstd[ch] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + opt.eps));
    }
  }

  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        const float h = (xv[off + j] - mean_c[ch]) * invstd[ch];
        xhat[off + j] = h;
        out[off + j] = gamma[ch] * h + beta[ch];
      }
    }
  }

  const bool train = opt.train;
  return tape_of(x).record(
      std::move(out), {x, scale_v, shift_v},
      [x, scale_v, shift_v, xhat = std::move(xhat), invstd = std::move(invstd), train, n, c,
       inner, count](Tape& t, const Tensor& g) {
        const Tensor& gamma = t.value(scale_v);
        std::vector<double> sum_g(static_cast<std::size_t>(c), 0.0),
            sum_gx(static_cast<std::size_t>(c), 0.0);
        for (int i = 0; i < n; ++i) {
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * inner;
            for (std::size_t j = 0; j < inner; ++j) {
              sum_g[ch] += g[off + j];
              sum_gx[ch] += static_cast<double>(g[off + j]) * xhat[off + j];
            }
          }
        }
        if (t.requires_grad(scale_v)) {
          Tensor gg({c});
          for (int ch = 0; ch < c; ++ch) gg[ch] = static_cast<float>(sum_gx[ch]);
          t.accumulate(scale_v, gg);
        }
        if (t.requires_grad(shift_v)) {
          Tensor gb({c});
          for (int ch = 0; ch < c; ++ch) gb[ch] = static_cast<float>(sum_g[ch]);
          t.accumulate(shift_v, gb);
        }
        if (!t.requires_grad(x)) return;
        Tensor gx(t.value(x).shape());
        const double m = static_cast<double>(count);
        for (int i = 0; i < n; ++i) {
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * inner;
            const double k = static_cast<double>(gamma[ch]) * invstd[ch];
            for (std::size_t j = 0; j < inner; ++j) {
              if (train) {
                gx[off + j] = static_cast<float>(
                    k * (g[off + j] - sum_g[ch] / m - xhat[off + j] * sum_gx[ch] / m));
              } else {
                gx[off + j] = static_cast<float>(k * g[off + j]);
              }
            }
          }
        }
        t.accumulate(x, gx);
      });
}

Var sum_over_time(Var x, int timesteps) {
  const Tensor& xv = x.value();
  if (timesteps < 1 || xv.ndim() < 1 || xv.dim(0) % timesteps != 0) {
    throw ShapeError("sum_over_time: leading axis " + shape_str(xv.shape()) +
                     " not divisible by T=" + std::to_string(timesteps));
  }
  Shape s = xv.shape();
  s[0] /= timesteps;
  Tensor out(s);
  const std::size_t step = out.size();
  for (int t = 0; t < timesteps; ++t) {
    const float* src = xv.ptr() + static_cast<std::size_t>(t) * step;
    for (std::size_t i = 0; i < step; ++i) out[i] += src[i];
  }
  return tape_of(x).record(std::move(out), {x}, [x, timesteps](Tape& t, const Tensor& g) {
    Tensor gx(t.value(x).shape());
    const std::size_t step = g.size();
    for (int s = 0; s < timesteps; ++s) {
      std::copy(g.ptr(), g.ptr() + step, gx.ptr() + static_cast<std::size_t>(s) * step);
    }
    t.accumulate(x, gx);
  });
}

Var repeat_time(Var x, int timesteps) {
  const Tensor& xv = x.value();
  if (timesteps < 1 || xv.ndim() < 1) throw ShapeError("repeat_time: needs T >= 1 and a leading axis");
  Shape s = xv.shape();
  s[0] *= timesteps;
  Tensor out(s);
  const std::size_t step = xv.size();
  for (int t = 0; t < timesteps; ++t) std::copy(xv.ptr(), xv.ptr() + step, out.ptr() + static_cast<std::size_t>(t) * step);
  return tape_of(x).record(std::move(out), {x}, [x, timesteps](Tape& t, const Tensor& g) {
    Tensor gx(t.value(x).shape());
    const std::size_t step = gx.size();
    for (int s = 0; s < timesteps; ++s) {
      const float* src = g.ptr() + static_cast<std::size_t>(s) * step;
      for (std::size_t i = 0; i < step; ++i) gx[i] += src[i];
    }
    t.accumulate(x, gx);
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  if (lv.ndim() != 2 || static_cast<std::size_t>(lv.dim(0)) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(lv.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const int n = lv.dim(0), k = lv.dim(1);
  std::vector<double> logp;
  std::vector<double> p = softmax_rows(lv, &logp);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw std::out_of_range("cross_entropy: label out of range");
    loss -= logp[static_cast<std::size_t>(i) * k + y];
  }
  loss /= n;
  if (!std::isfinite(loss)) throw NumericError("cross_entropy is not finite");
  std::vector<int> ys(labels.begin(), labels.end());
  return tape_of(logits).record(
      Tensor::scalar(static_cast<float>(loss)), {logits},
      [logits, p = std::move(p), ys = std::move(ys), n, k](Tape& t, const Tensor& g) {
        Tensor gl({n, k});
        const double s = static_cast<double>(g[0]) / n;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < k; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * k + j;
            const double target = (j == ys[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
            gl[idx] = static_cast<float>(s * (p[idx] - target));
          }
        }
        t.accumulate(logits, gl);
      });
}

Var kl_divergence(Var p_logits, Var q_logits) {
  const Tensor& pv = p_logits.value();
  const Tensor& qv = q_logits.value();
  require_same_shape(pv, qv, "kl_divergence");
  if (pv.ndim() != 2) throw ShapeError("kl_divergence expects [N,K] logits");
  const int n = pv.dim(0), k = pv.dim(1);
  std::vector<double> logp, logq;
  std::vector<double> p = softmax_rows(pv, &logp);
  std::vector<double> q = softmax_rows(qv, &logq);
  std::vector<double> per_sample(static_cast<std::size_t>(n), 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * k + j;
      if (p[idx] > 0.0) s += p[idx] * (logp[idx] - logq[idx]);
    }
    per_sample[static_cast<std::size_t>(i)] = s;
    total += s;
  }
  total /= n;
  if (!std::isfinite(total)) throw NumericError("KL divergence is not finite");
  return tape_of(p_logits).record(
      Tensor::scalar(static_cast<float>(total)), {p_logits, q_logits},
      [p_logits, q_logits, p = std::move(p), q = std::move(q), logp = std::move(logp),
       logq = std::move(logq), per_sample = std::move(per_sample), n, k](Tape& t,
                                                                          const Tensor& g) {
        const double s = static_cast<double>(g[0]) / n;
        if (t.requires_grad(p_logits)) {
          Tensor gp({n, k});
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < k; ++j) {
              const std::size_t idx = static_cast<std::size_t>(i) * k + j;
              gp[idx] = static_cast<float>(
                  s * p[idx] * (logp[idx] - logq[idx] - per_sample[static_cast<std::size_t>(i)]));
            }
          }
          t.accumulate(p_logits, gp);
        }
        if (t.requires_grad(q_logits)) {
          Tensor gq({n, k});
          for (std::size_t idx = 0; idx < gq.size(); ++idx) {
            gq[idx] = static_cast<float>(s * (q[idx] - p[idx]));
          }
          t.accumulate(q_logits, gq);
        }
      });
}

Var masked_weight_ste(Var w, Var scores, const Tensor& mask) {
  const Tensor& wv = w.value();
  require_same_shape(wv, scores.value(), "masked_weight_ste");
  require_same_shape(wv, mask, "masked_weight_ste");
  Tensor out = wv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return tape_of(w).record(std::move(out), {w, scores}, [w, scores, mask](Tape& t, const Tensor& g) {
    if (t.requires_grad(w)) {
      Tensor gw = g;
      for (std::size_t i = 0; i < gw.size(); ++i) gw[i] *= mask[i];
      t.accumulate(w, gw);
    }
    if (t.requires_grad(scores)) {
      const Tensor& wv = t.value(w);
      Tensor gs = g;
      for (std::size_t i = 0; i < gs.size(); ++i) gs[i] *= wv[i];
      t.accumulate(scores, gs);
    }
  });
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) throw ShapeError("argmax_rows expects [N,K]");
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* row = logits.ptr() + static_cast<std::size_t>(i) * k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

}  // namespace rsnn::ops
