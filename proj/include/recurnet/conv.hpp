#pragma once

#include "recurnet/tensor.hpp"

namespace recurnet {

// Square-kernel 2D convolution geometry. Padding is dilation * (k - 1) / 2 so
// stride 1 preserves the spatial size and stride 2 halves even sizes.
struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t dilation = 1;

  std::size_t padding() const { return dilation * (kernel - 1) / 2; }
  std::size_t output_size(std::size_t input) const {
    return (input + 2 * padding() - dilation * (kernel - 1) - 1) / stride + 1;
  }
  // Receptive field of one application, in input pixels.
  std::size_t span() const { return dilation * (kernel - 1) + 1; }
};

// input (Cin, H, W), kernel (Cout, Cin, K, K), bias (Cout) -> (Cout, Ho, Wo).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                         const ConvGeometry& geom);

// Accumulates into the gradient tensors that are non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_output,
                     const ConvGeometry& geom, Tensor<T>* grad_input, Tensor<T>* grad_kernel,
                     Tensor<T>* grad_bias);

}  // namespace recurnet
