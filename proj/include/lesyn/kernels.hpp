#pragma once

#include <span>

#include "lesyn/tensor.hpp"

namespace lesyn::kernels {

/// Square-kernel convolution geometry with symmetric zero padding.
struct ConvGeometry {
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    int out_size(int in) const noexcept { return (in + 2 * pad - kernel) / stride + 1; }
};

// Production kernels: im2col + GEMM, OpenMP over independent planes. Every parallel
// region writes disjoint outputs, so results do not depend on the thread count.
// Weight layout is (out_channels, in_channels, k, k); dense weights are (out, in, 1, 1)
// and dense inputs are read as (n, item_size) rows. Backward overwrites its outputs;
// dx may be null when the input gradient is not needed. An empty bias span means no bias.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, ConvGeometry g);

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, ConvGeometry g,
                     Tensor<T>* dx, Tensor<T>& dweight, std::span<T> dbias);

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias);

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                    Tensor<T>& dweight, std::span<T> dbias);

/// Number of OpenMP threads the kernels will use (1 without OpenMP).
int max_threads() noexcept;

namespace reference {

// Serial direct-loop implementations, kept as the test oracle for the kernels above.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, ConvGeometry g);

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, ConvGeometry g,
                     Tensor<T>* dx, Tensor<T>& dweight, std::span<T> dbias);

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias);

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                    Tensor<T>& dweight, std::span<T> dbias);

}  // namespace reference
}  // namespace lesyn::kernels
