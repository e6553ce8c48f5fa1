#include "lesyn/kernels.hpp"

#include <Eigen/Core>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace lesyn::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& weight, std::size_t bias_size, ConvGeometry g) {
    if (weight.c != x.c || weight.h != g.kernel || weight.w != g.kernel)
        throw InvalidArgument("conv2d: weight " + shape_string(weight.shape()) + " does not match input " +
                              shape_string(x.shape()));
    if (bias_size != 0 && bias_size != static_cast<std::size_t>(weight.n))
        throw InvalidArgument("conv2d: bias length mismatch");
    if (g.out_size(x.h) < 1 || g.out_size(x.w) < 1) throw InvalidArgument("conv2d: empty output");
}

// col has K = c*k*k rows and n*oh*ow columns; row (ci, ky, kx), column (item, oy, ox).
template <typename T>
RowMat<T> im2col(const Tensor<T>& x, ConvGeometry g, int oh, int ow) {
    const int k = g.kernel;
    const Eigen::Index rows = static_cast<Eigen::Index>(x.c) * k * k;
    const Eigen::Index spatial = static_cast<Eigen::Index>(oh) * ow;
    RowMat<T> col(rows, spatial * x.n);
    const int planes = x.n * x.c;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
        const int n = p / x.c, ci = p % x.c;
        const T* src = x.plane(n, ci);
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col.data() + ((static_cast<Eigen::Index>(ci) * k + ky) * k + kx) * col.cols() + n * spatial;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    T* row = dst + static_cast<Eigen::Index>(oy) * ow;
                    if (iy < 0 || iy >= x.h) {
                        std::fill(row, row + ow, T(0));
                        continue;
                    }
                    const T* srow = src + static_cast<std::size_t>(iy) * x.w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        row[ox] = (ix < 0 || ix >= x.w) ? T(0) : srow[ix];
                    }
                }
            }
    }
    return col;
}

template <typename T>
void col2im(const RowMat<T>& col, ConvGeometry g, int oh, int ow, Tensor<T>& dx) {
    const int k = g.kernel;
    const Eigen::Index spatial = static_cast<Eigen::Index>(oh) * ow;
    const int planes = dx.n * dx.c;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
        const int n = p / dx.c, ci = p % dx.c;
        T* dst = dx.plane(n, ci);
        std::fill(dst, dst + dx.plane_size(), T(0));
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* src =
                    col.data() + ((static_cast<Eigen::Index>(ci) * k + ky) * k + kx) * col.cols() + n * spatial;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= dx.h) continue;
                    const T* row = src + static_cast<Eigen::Index>(oy) * ow;
                    T* drow = dst + static_cast<std::size_t>(iy) * dx.w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < dx.w) drow[ix] += row[ox];
                    }
                }
            }
    }
}

}  // namespace

int max_threads() noexcept {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, ConvGeometry g) {
    check_conv_args(x, weight, bias.size(), g);
    const int oh = g.out_size(x.h), ow = g.out_size(x.w);
    const Eigen::Index spatial = static_cast<Eigen::Index>(oh) * ow;
    const RowMat<T> col = im2col(x, g, oh, ow);
    ConstMapMat<T> wmat(weight.data.data(), weight.n, col.rows());
    const RowMat<T> ymat = wmat * col;

    Tensor<T> y(x.n, weight.n, oh, ow);
    const int planes = x.n * weight.n;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
        const int n = p / weight.n, co = p % weight.n;
        const T b = bias.empty() ? T(0) : bias[co];
        const T* src = ymat.data() + co * ymat.cols() + n * spatial;
        T* dst = y.plane(n, co);
        for (Eigen::Index i = 0; i < spatial; ++i) dst[i] = src[i] + b;
    }
    return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, ConvGeometry g,
                     Tensor<T>* dx, Tensor<T>& dweight, std::span<T> dbias) {
    check_conv_args(x, weight, dbias.size(), g);
    const int oh = dy.h, ow = dy.w;
    const Eigen::Index spatial = static_cast<Eigen::Index>(oh) * ow;
    if (dy.n != x.n || dy.c != weight.n || oh != g.out_size(x.h) || ow != g.out_size(x.w))
        throw InvalidArgument("conv2d_backward: dy shape " + shape_string(dy.shape()));

    RowMat<T> dymat(weight.n, spatial * x.n);
    const int planes = x.n * weight.n;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
        const int n = p / weight.n, co = p % weight.n;
        const T* src = dy.plane(n, co);
        std::copy(src, src + spatial, dymat.data() + co * dymat.cols() + n * spatial);
    }
    for (int co = 0; co < weight.n && !dbias.empty(); ++co) dbias[co] = dymat.row(co).sum();

    const RowMat<T> col = im2col(x, g, oh, ow);
    dweight = Tensor<T>(weight.shape());
    MapMat<T> dw(dweight.data.data(), weight.n, col.rows());
    dw.noalias() = dymat * col.transpose();

    if (dx) {
        ConstMapMat<T> wmat(weight.data.data(), weight.n, col.rows());
        const RowMat<T> dcol = wmat.transpose() * dymat;
        *dx = Tensor<T>(x.shape());
        col2im(dcol, g, oh, ow, *dx);
    }
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias) {
    const auto in = static_cast<Eigen::Index>(x.item_size());
    if (weight.c != in || weight.h != 1 || weight.w != 1) throw InvalidArgument("dense: weight/input mismatch");
    if (!bias.empty() && bias.size() != static_cast<std::size_t>(weight.n))
        throw InvalidArgument("dense: bias length mismatch");
    ConstMapMat<T> xm(x.data.data(), x.n, in);
    ConstMapMat<T> wm(weight.data.data(), weight.n, in);
    Tensor<T> y(x.n, weight.n, 1, 1);
    MapMat<T> ym(y.data.data(), x.n, weight.n);
    ym.noalias() = xm * wm.transpose();
    if (!bias.empty()) {
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.data(), weight.n);
        ym.rowwise() += bv;
    }
    return y;
}

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                    Tensor<T>& dweight, std::span<T> dbias) {
    const auto in = static_cast<Eigen::Index>(x.item_size());
    if (weight.c != in || dy.n != x.n || static_cast<int>(dy.item_size()) != weight.n)
        throw InvalidArgument("dense_backward: shape mismatch");
    ConstMapMat<T> xm(x.data.data(), x.n, in);
    ConstMapMat<T> wm(weight.data.data(), weight.n, in);
    ConstMapMat<T> dym(dy.data.data(), x.n, weight.n);
    dweight = Tensor<T>(weight.shape());
    MapMat<T> dw(dweight.data.data(), weight.n, in);
    dw.noalias() = dym.transpose() * xm;
    for (int o = 0; o < weight.n && !dbias.empty(); ++o) dbias[o] = dym.col(o).sum();
    if (dx) {
        *dx = Tensor<T>(x.shape());
        MapMat<T> dxm(dx->data.data(), x.n, in);
        dxm.noalias() = dym * wm;
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

}  // namespace lesyn::kernels
