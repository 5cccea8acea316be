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

#ifndef RSNN_KERNELS_HPP_
#define RSNN_KERNELS_HPP_

#include "rsnn/tensor.hpp"

// Untaped numeric kernels. All loops run in a fixed order, so results are
// bit-reproducible for identical inputs.
namespace rsnn::kernels {

// Row-major GEMM variants. When `accumulate` is false, C is overwritten.
// C[m,n] = A[m,k] * B[k,n]
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
// C[m,n] = A[k,m]^T * B[k,n]
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
// C[m,n] = A[m,k] * B[n,k]^T
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);

Tensor matmul(const Tensor& a, const Tensor& b);

struct ConvGeometry {
  int batch = 0, channels = 0, height = 0, width = 0;
  int filters = 0, kernel = 0, stride = 1, padding = 0;
  int out_height = 0, out_width = 0;

  int patch() const { return channels * kernel * kernel; }
  int out_plane() const { return out_height * out_width; }
};

/// Validates NCHW input against [F,C,k,k] weights; throws ShapeError when the
/// output size is not integral or the kernel does not fit.
ConvGeometry conv_geometry(const Shape& input, const Shape& weight, int stride, int padding);

/// One image [C,H,W] -> columns [C*k*k, OH*OW].
void im2col(const float* image, const ConvGeometry& g, float* cols);
/// Scatter-adds columns back into one image [C,H,W].
void col2im(const float* cols, const ConvGeometry& g, float* image);

/// Cross-correlation with zero padding; `bias` may be empty.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

struct ConvGrads {
  Tensor input, weight, bias;
};
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight,
                          int stride, int padding, bool need_input, bool need_weight,
                          bool need_bias);

/// Non-overlapping k x k average pooling; H and W must be divisible by k.
Tensor avgpool2d(const Tensor& input, int k);
Tensor avgpool2d_backward(const Tensor& grad_out, const Shape& input_shape, int k);

}  // namespace rsnn::kernels

#endif  // RSNN_KERNELS_HPP_
