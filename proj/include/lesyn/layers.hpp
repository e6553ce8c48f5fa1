#pragma once

// Elementwise and normalization layers shared by the generator, discriminator and
// segmenter. Header-only; the heavy lifting lives in kernels.hpp.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lesyn/tensor.hpp"

namespace lesyn::layers {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
struct BatchNormCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
    std::vector<T> batch_mean;
    std::vector<T> batch_var;  // unbiased, for the running estimate
};

template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                          BatchNormCache<T>& cache) {
    if (gamma.size() != static_cast<std::size_t>(x.c) || beta.size() != gamma.size())
        throw InvalidArgument("batchnorm: parameter length mismatch");
    const std::size_t plane = x.plane_size();
    const std::size_t m = plane * x.n;
    Tensor<T> y(x.shape());
    cache.xhat = Tensor<T>(x.shape());
    cache.inv_std.assign(x.c, T(0));
    cache.batch_mean.assign(x.c, T(0));
    cache.batch_var.assign(x.c, T(0));
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < x.c; ++ch) {
        T sum = 0;
        for (int n = 0; n < x.n; ++n) {
            const T* p = x.plane(n, ch);
            for (std::size_t i = 0; i < plane; ++i) sum += p[i];
        }
        const T mean = sum / static_cast<T>(m);
        T sq = 0;
        for (int n = 0; n < x.n; ++n) {
            const T* p = x.plane(n, ch);
            for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
        }
        const T var = sq / static_cast<T>(m);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(kBatchNormEps));
        cache.inv_std[ch] = inv;
        cache.batch_mean[ch] = mean;
        cache.batch_var[ch] = m > 1 ? sq / static_cast<T>(m - 1) : var;
        for (int n = 0; n < x.n; ++n) {
            const T* p = x.plane(n, ch);
            T* xh = cache.xhat.plane(n, ch);
            T* out = y.plane(n, ch);
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mean) * inv;
                out[i] = gamma[ch] * xh[i] + beta[ch];
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> batchnorm_eval(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                         std::span<const T> running_mean, std::span<const T> running_var) {
    if (gamma.size() != static_cast<std::size_t>(x.c)) throw InvalidArgument("batchnorm: parameter length mismatch");
    Tensor<T> y(x.shape());
    const std::size_t plane = x.plane_size();
    for (int n = 0; n < x.n; ++n)
        for (int ch = 0; ch < x.c; ++ch) {
            const T inv = T(1) / std::sqrt(running_var[ch] + static_cast<T>(kBatchNormEps));
            const T* p = x.plane(n, ch);
            T* out = y.plane(n, ch);
            for (std::size_t i = 0; i < plane; ++i) out[i] = gamma[ch] * (p[i] - running_mean[ch]) * inv + beta[ch];
        }
    return y;
}

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const BatchNormCache<T>& cache, std::span<const T> gamma,
                             std::span<T> dgamma, std::span<T> dbeta) {
    const std::size_t plane = dy.plane_size();
    const T m = static_cast<T>(plane * dy.n);
    Tensor<T> dx(dy.shape());
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < dy.c; ++ch) {
        T sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < dy.n; ++n) {
            const T* d = dy.plane(n, ch);
            const T* xh = cache.xhat.plane(n, ch);
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += d[i];
                sum_dy_xhat += d[i] * xh[i];
            }
        }
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        const T scale = gamma[ch] * cache.inv_std[ch] / m;
        for (int n = 0; n < dy.n; ++n) {
            const T* d = dy.plane(n, ch);
            const T* xh = cache.xhat.plane(n, ch);
            T* out = dx.plane(n, ch);
            for (std::size_t i = 0; i < plane; ++i) out[i] = scale * (m * d[i] - sum_dy - xh[i] * sum_dy_xhat);
        }
    }
    return dx;
}

/// Exponential moving update of running statistics with the standard 0.1 momentum.
template <typename T>
void update_running_stats(std::span<T> running_mean, std::span<T> running_var, const BatchNormCache<T>& cache) {
    const T mom = static_cast<T>(kBatchNormMomentum);
    for (std::size_t ch = 0; ch < running_mean.size(); ++ch) {
        running_mean[ch] = (T(1) - mom) * running_mean[ch] + mom * cache.batch_mean[ch];
        running_var[ch] = (T(1) - mom) * running_var[ch] + mom * cache.batch_var[ch];
    }
}

template <typename T>
Tensor<T> leaky_relu(Tensor<T> x, T slope) {
    for (auto& v : x.data) v = v > T(0) ? v : v * slope;
    return x;
}

/// Uses the activation output; valid because a positive slope preserves sign.
template <typename T>
Tensor<T> leaky_relu_backward(Tensor<T> dy, const Tensor<T>& y, T slope) {
    for (std::size_t i = 0; i < dy.data.size(); ++i)
        if (!(y.data[i] > T(0))) dy.data[i] *= slope;
    return dy;
}

template <typename T>
Tensor<T> tanh_forward(Tensor<T> x) {
    for (auto& v : x.data) v = std::tanh(v);
    return x;
}

template <typename T>
Tensor<T> tanh_backward(Tensor<T> dy, const Tensor<T>& y) {
    for (std::size_t i = 0; i < dy.data.size(); ++i) dy.data[i] *= T(1) - y.data[i] * y.data[i];
    return dy;
}

/// Inverted-dropout multipliers: 0 with probability `rate`, 1/(1-rate) otherwise.
template <typename T>
Tensor<T> dropout_mask(std::array<int, 4> shape, double rate, std::uint64_t seed) {
    Tensor<T> mask(shape, T(1));
    if (rate <= 0.0) return mask;
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(1.0 - rate);
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& v : mask.data) v = keep(rng) ? scale : T(0);
    return mask;
}

template <typename T>
Tensor<T> multiply(Tensor<T> a, const Tensor<T>& b) {
    require_same_shape(a, b, "multiply");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] *= b.data[i];
    return a;
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int n = 0; n < x.n; ++n)
        for (int ch = 0; ch < x.c; ++ch)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx) y.at(n, ch, yy, xx) = x.at(n, ch, yy / 2, xx / 2);
    return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
    for (int n = 0; n < dy.n; ++n)
        for (int ch = 0; ch < dy.c; ++ch)
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx) dx.at(n, ch, yy / 2, xx / 2) += dy.at(n, ch, yy, xx);
    return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) throw InvalidArgument("concat_channels: shape mismatch");
    Tensor<T> y(a.n, a.c + b.c, a.h, a.w);
    for (int n = 0; n < a.n; ++n) {
        std::copy(a.item(n), a.item(n) + a.item_size(), y.item(n));
        std::copy(b.item(n), b.item(n) + b.item_size(), y.item(n) + a.item_size());
    }
    return y;
}

/// Splits a channel-concatenated gradient back into its (first `c_first` channels, rest) parts.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& d, int c_first) {
    Tensor<T> a(d.n, c_first, d.h, d.w), b(d.n, d.c - c_first, d.h, d.w);
    for (int n = 0; n < d.n; ++n) {
        std::copy(d.item(n), d.item(n) + a.item_size(), a.item(n));
        std::copy(d.item(n) + a.item_size(), d.item(n) + d.item_size(), b.item(n));
    }
    return {std::move(a), std::move(b)};
}

template <typename T>
Tensor<T> reshape(Tensor<T> x, int c, int h, int w) {
    if (x.item_size() != static_cast<std::size_t>(c) * h * w) throw InvalidArgument("reshape: size mismatch");
    x.c = c;
    x.h = h;
    x.w = w;
    return x;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace lesyn::layers

namespace lesyn {

/// Train mode uses batch statistics and dropout; eval mode is deterministic.
enum class Mode { train, eval };

}  // namespace lesyn
