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

#include "rsnn/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace rsnn::kernels {

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0f);
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::size_t>(i) * n;
    const float* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0f);
  for (int p = 0; p < k; ++p) {
    const float* arow = a + static_cast<std::size_t>(p) * m;
    const float* brow = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const float av = arow[i];
      if (av == 0.0f) continue;
      float* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  // Transpose B once so the inner loop streams contiguous memory.
  std::vector<float> bt(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j) {
    const float* brow = b + static_cast<std::size_t>(j) * k;
    for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = brow[p];
  }
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.ptr(), b.ptr(), c.ptr(), false);
  return c;
}

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, int stride, int padding) {
  if (input.size() != 4 || weight.size() != 4) {
    throw ShapeError("conv2d expects NCHW input and FCkk weight, got " + shape_str(input) +
                     " and " + shape_str(weight));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d stride must be >= 1, padding >= 0");
  ConvGeometry g;
  g.batch = input[0];
  g.channels = input[1];
  g.height = input[2];
  g.width = input[3];
  g.filters = weight[0];
  g.kernel = weight[2];
  g.stride = stride;
  g.padding = padding;
  if (weight[1] != g.channels || weight[3] != g.kernel) {
    throw ShapeError("conv2d weight " + shape_str(weight) + " incompatible with input " +
                     shape_str(input));
  }
  const int span_h = g.height + 2 * padding - g.kernel;
  const int span_w = g.width + 2 * padding - g.kernel;
  if (span_h < 0 || span_w < 0) throw ShapeError("conv2d kernel larger than padded input");
  if (span_h % stride != 0 || span_w % stride != 0) {
    throw ShapeError("conv2d output size is not integral for input " + shape_str(input));
  }
  g.out_height = span_h / stride + 1;
  g.out_width = span_w / stride + 1;
  return g;
}

void im2col(const float* image, const ConvGeometry& g, float* cols) {
  const int plane = g.out_plane();
  for (int c = 0; c < g.channels; ++c) {
    const float* src = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        float* dst = cols + static_cast<std::size_t>((c * g.kernel + ky) * g.kernel + kx) * plane;
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          float* drow = dst + static_cast<std::size_t>(oy) * g.out_width;
          if (iy < 0 || iy >= g.height) {
            std::fill(drow, drow + g.out_width, 0.0f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            drow[ox] = (ix >= 0 && ix < g.width) ? srow[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const ConvGeometry& g, float* image) {
  const int plane = g.out_plane();
  for (int c = 0; c < g.channels; ++c) {
    float* dst = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const float* src =
            cols + static_cast<std::size_t>((c * g.kernel + ky) * g.kernel + kx) * plane;
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          float* drow = dst + static_cast<std::size_t>(iy) * g.width;
          const float* srow = src + static_cast<std::size_t>(oy) * g.out_width;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), stride, padding);
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(g.filters)) {
    throw ShapeError("conv2d bias length mismatch");
  }
  Tensor out({g.batch, g.filters, g.out_height, g.out_width});
  std::vector<float> cols(static_cast<std::size_t>(g.patch()) * g.out_plane());
  const std::size_t in_stride = static_cast<std::size_t>(g.channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.filters) * g.out_plane();
  for (int n = 0; n < g.batch; ++n) {
    im2col(input.ptr() + n * in_stride, g, cols.data());
    float* o = out.ptr() + n * out_stride;
    gemm_nn(g.filters, g.out_plane(), g.patch(), weight.ptr(), cols.data(), o, false);
    if (!bias.empty()) {
      for (int f = 0; f < g.filters; ++f) {
        float* row = o + static_cast<std::size_t>(f) * g.out_plane();
        for (int j = 0; j < g.out_plane(); ++j) row[j] += bias[static_cast<std::size_t>(f)];
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight,
                          int stride, int padding, bool need_input, bool need_weight,
                          bool need_bias) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), stride, padding);
  ConvGrads grads;
  if (need_input) grads.input = Tensor(input.shape());
  if (need_weight) grads.weight = Tensor(weight.shape());
  if (need_bias) grads.bias = Tensor({g.filters});
  const std::size_t in_stride = static_cast<std::size_t>(g.channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.filters) * g.out_plane();
  std::vector<float> cols(static_cast<std::size_t>(g.patch()) * g.out_plane());
  for (int n = 0; n < g.batch; ++n) {
    const float* go = grad_out.ptr() + n * out_stride;
    if (need_weight) {
      im2col(input.ptr() + n * in_stride, g, cols.data());
      gemm_nt(g.filters, g.patch(), g.out_plane(), go, cols.data(), grads.weight.ptr(), true);
    }
    if (need_input) {
      gemm_tn(g.patch(), g.out_plane(), g.filters, weight.ptr(), go, cols.data(), false);
      col2im(cols.data(), g, grads.input.ptr() + n * in_stride);
    }
    if (need_bias) {
      for (int f = 0; f < g.filters; ++f) {
        const float* row = go + static_cast<std::size_t>(f) * g.out_plane();
        float s = 0.0f;
        for (int j = 0; j < g.out_plane(); ++j) s += row[j];
        grads.bias[static_cast<std::size_t>(f)] += s;
      }
    }
  }
  return grads;
}

Tensor avgpool2d(const Tensor& input, int k) {
  if (input.ndim() != 4 || k < 1 || input.dim(2) % k != 0 || input.dim(3) % k != 0) {
    throw ShapeError("avgpool2d(" + std::to_string(k) + ") incompatible with " +
                     shape_str(input.shape()));
  }
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = h / k, ow = w / k;
  Tensor out({n, c, oh, ow});
  const float inv = 1.0f / static_cast<float>(k * k);
  for (int p = 0; p < n * c; ++p) {
    const float* src = input.ptr() + static_cast<std::size_t>(p) * h * w;
    float* dst = out.ptr() + static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float s = 0.0f;
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) s += src[(oy * k + dy) * w + ox * k + dx];
        }
        dst[oy * ow + ox] = s * inv;
      }
    }
  }
  return out;
}

Tensor avgpool2d_backward(const Tensor& grad_out, const Shape& input_shape, int k) {
  Tensor grad(input_shape);
  const int n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
  const int oh = h / k, ow = w / k;
  const float inv = 1.0f / static_cast<float>(k * k);
  for (int p = 0; p < n * c; ++p) {
    const float* src = grad_out.ptr() + static_cast<std::size_t>(p) * oh * ow;
    float* dst = grad.ptr() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) dst[y * w + x] = src[(y / k) * ow + x / k] * inv;
    }
  }
  return grad;
}

}  // namespace rsnn::kernels
