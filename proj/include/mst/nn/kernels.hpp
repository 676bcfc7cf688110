#pragma once

// Convolution and normalisation kernels.
//
// mst::nn::kernels holds the OpenMP versions used by the layers. Each output
// element is owned by exactly one thread and summed in a fixed order, so
// results are identical for any thread count. mst::nn::reference holds
// direct, serial transcriptions of the definitions, kept as a test oracle
// and a benchmark baseline.
//
// Convolution is cross-correlation (no kernel flip). Tensors are
// [N, C, H, W]; conv weights are [C_out, C_in, K, K]; transposed-conv
// weights are [C_in, C_out, K, K]. Reductions accumulate in double.

#include <cstddef>

#include "mst/nn/tensor.hpp"

namespace mst::nn {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// floor((in + 2 pad - k) / stride) + 1. Throws NnError{ShapeMismatch} if the
// kernel does not fit.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, ConvGeometry g);
// (in - 1) stride - 2 pad + k. Throws NnError{ShapeMismatch} if not positive.
std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, ConvGeometry g);

// Per-(sample, channel) statistics saved by the instance-norm forward pass.
template <typename T>
struct InstanceNormCache {
  BasicTensor<T> normalized;  // x_hat, same shape as input
  std::vector<double> inv_std;  // N * C
};

template <typename T>
struct InstanceNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> scale;
  BasicTensor<T> shift;
};

template <typename T>
struct ConvWeightGrads {
  BasicTensor<T> weight;
  BasicTensor<T> bias;  // [C_out]
};

namespace kernels {

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                              ConvGeometry g);
// Gradient w.r.t. the conv input; in_h/in_w is the input's spatial size.
template <typename T>
BasicTensor<T> conv2d_backward_data(const BasicTensor<T>& dy, const BasicTensor<T>& w, std::size_t in_h,
                                    std::size_t in_w, ConvGeometry g);
template <typename T>
ConvWeightGrads<T> conv2d_backward_weights(const BasicTensor<T>& x, const BasicTensor<T>& dy, std::size_t k,
                                           ConvGeometry g);
template <typename T>
BasicTensor<T> instance_norm_forward(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                                     const BasicTensor<T>& shift, double eps, InstanceNormCache<T>* cache);
template <typename T>
InstanceNormGrads<T> instance_norm_backward(const BasicTensor<T>& dy, const InstanceNormCache<T>& cache,
                                            const BasicTensor<T>& scale);

}  // namespace kernels

namespace reference {

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                              ConvGeometry g);
template <typename T>
BasicTensor<T> conv2d_backward_data(const BasicTensor<T>& dy, const BasicTensor<T>& w, std::size_t in_h,
                                    std::size_t in_w, ConvGeometry g);
template <typename T>
ConvWeightGrads<T> conv2d_backward_weights(const BasicTensor<T>& x, const BasicTensor<T>& dy, std::size_t k,
                                           ConvGeometry g);
template <typename T>
BasicTensor<T> instance_norm_forward(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                                     const BasicTensor<T>& shift, double eps, InstanceNormCache<T>* cache);
template <typename T>
InstanceNormGrads<T> instance_norm_backward(const BasicTensor<T>& dy, const InstanceNormCache<T>& cache,
                                            const BasicTensor<T>& scale);

}  // namespace reference

// Transposed convolution expressed through the conv kernels: its forward is
// the conv data-gradient, its data-gradient is the conv forward, and its
// weight gradient is the conv weight gradient with the operands swapped.
template <typename T>
BasicTensor<T> conv2d_transpose_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                                        ConvGeometry g);
template <typename T>
BasicTensor<T> conv2d_transpose_backward_data(const BasicTensor<T>& dy, const BasicTensor<T>& w, ConvGeometry g);
template <typename T>
ConvWeightGrads<T> conv2d_transpose_backward_weights(const BasicTensor<T>& x, const BasicTensor<T>& dy, std::size_t k,
                                                     ConvGeometry g);

}  // namespace mst::nn
