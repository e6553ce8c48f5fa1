#include "lesyn/kernels.hpp"

namespace lesyn::kernels::reference {

namespace {

template <typename T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& weight, std::size_t bias_size, ConvGeometry g) {
    if (weight.c != x.c || weight.h != g.kernel || weight.w != g.kernel)
        throw InvalidArgument("conv2d: weight " + shape_string(weight.shape()) + " does not match input " +
                              shape_string(x.shape()));
    if (bias_size != 0 && bias_size != static_cast<std::size_t>(weight.n))
        throw InvalidArgument("conv2d: bias length mismatch");
    if (g.out_size(x.h) < 1 || g.out_size(x.w) < 1) throw InvalidArgument("conv2d: empty output");
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, ConvGeometry g) {
    check_conv_args(x, weight, bias.size(), g);
    const int oh = g.out_size(x.h), ow = g.out_size(x.w);
    Tensor<T> y(x.n, weight.n, oh, ow);
    for (int n = 0; n < x.n; ++n)
        for (int co = 0; co < weight.n; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = bias.empty() ? T(0) : bias[co];
                    for (int ci = 0; ci < x.c; ++ci)
                        for (int ky = 0; ky < g.kernel; ++ky)
                            for (int kx = 0; kx < g.kernel; ++kx) {
                                const int iy = oy * g.stride - g.pad + ky;
                                const int ix = ox * g.stride - g.pad + kx;
                                if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
                                acc += weight.at(co, ci, ky, kx) * x.at(n, ci, iy, ix);
                            }
                    y.at(n, co, oy, ox) = acc;
                }
    return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, ConvGeometry g,
                     Tensor<T>* dx, Tensor<T>& dweight, std::span<T> dbias) {
    check_conv_args(x, weight, dbias.size(), g);
    dweight = Tensor<T>(weight.shape());
    for (auto& b : dbias) b = T(0);
    if (dx) *dx = Tensor<T>(x.shape());
    for (int n = 0; n < x.n; ++n)
        for (int co = 0; co < weight.n; ++co)
            for (int oy = 0; oy < dy.h; ++oy)
                for (int ox = 0; ox < dy.w; ++ox) {
                    const T d = dy.at(n, co, oy, ox);
                    if (!dbias.empty()) dbias[co] += d;
                    for (int ci = 0; ci < x.c; ++ci)
                        for (int ky = 0; ky < g.kernel; ++ky)
                            for (int kx = 0; kx < g.kernel; ++kx) {
                                const int iy = oy * g.stride - g.pad + ky;
                                const int ix = ox * g.stride - g.pad + kx;
                                if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
                                dweight.at(co, ci, ky, kx) += d * x.at(n, ci, iy, ix);
                                if (dx) dx->at(n, ci, iy, ix) += d * weight.at(co, ci, ky, kx);
                            }
                }
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias) {
    const int in = static_cast<int>(x.item_size());
    if (weight.c != in || weight.h != 1 || weight.w != 1) throw InvalidArgument("dense: weight/input mismatch");
    Tensor<T> y(x.n, weight.n, 1, 1);
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < weight.n; ++o) {
            T acc = bias.empty() ? T(0) : bias[o];
            for (int i = 0; i < in; ++i) acc += weight.data[static_cast<std::size_t>(o) * in + i] * x.item(n)[i];
            y.data[static_cast<std::size_t>(n) * weight.n + o] = acc;
        }
    return y;
}

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                    Tensor<T>& dweight, std::span<T> dbias) {
    const int in = static_cast<int>(x.item_size());
    dweight = Tensor<T>(weight.shape());
    for (auto& b : dbias) b = T(0);
    if (dx) *dx = Tensor<T>(x.shape());
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < weight.n; ++o) {
            const T d = dy.data[static_cast<std::size_t>(n) * weight.n + o];
            if (!dbias.empty()) dbias[o] += d;
            for (int i = 0; i < in; ++i) {
                dweight.data[static_cast<std::size_t>(o) * in + i] += d * x.item(n)[i];
                if (dx) dx->item(n)[i] += d * weight.data[static_cast<std::size_t>(o) * in + i];
            }
        }
}

#define LESYN_INSTANTIATE(T)                                                                                    \
    template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, std::span<const T>, ConvGeometry);   \
    template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry,          \
                                  Tensor<T>*, Tensor<T>&, std::span<T>);                                       \
    template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, std::span<const T>);                   \
    template void dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*, Tensor<T>&, \
                                 std::span<T>);
LESYN_INSTANTIATE(float)
LESYN_INSTANTIATE(double)
#undef LESYN_INSTANTIATE

}  // namespace lesyn::kernels::reference
