#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lesyn/errors.hpp"

namespace lesyn {

/// Dense NCHW tensor. Dense-layer activations use shape (n, features, 1, 1).
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) throw InvalidArgument("negative tensor dimension");
    }
    explicit Tensor(std::array<int, 4> s, T fill = T(0)) : Tensor(s[0], s[1], s[2], s[3], fill) {}

    std::array<int, 4> shape() const noexcept { return {n, c, h, w}; }
    std::size_t size() const noexcept { return data.size(); }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::size_t item_size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
    bool same_shape(const Tensor& o) const noexcept { return shape() == o.shape(); }

    T& at(int i, int ch, int y, int x) noexcept {
        return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
    }
    const T& at(int i, int ch, int y, int x) const noexcept {
        return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
    }
    T* plane(int i, int ch) noexcept { return data.data() + (static_cast<std::size_t>(i) * c + ch) * plane_size(); }
    const T* plane(int i, int ch) const noexcept {
        return data.data() + (static_cast<std::size_t>(i) * c + ch) * plane_size();
    }
    T* item(int i) noexcept { return data.data() + static_cast<std::size_t>(i) * item_size(); }
    const T* item(int i) const noexcept { return data.data() + static_cast<std::size_t>(i) * item_size(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(n, c, h, w);
        for (std::size_t k = 0; k < data.size(); ++k) out.data[k] = static_cast<U>(data[k]);
        return out;
    }

    bool operator==(const Tensor&) const = default;
};

inline std::string shape_string(std::array<int, 4> s) {
    return "[" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," +
           std::to_string(s[3]) + "]";
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw InvalidArgument(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                              shape_string(b.shape()));
}

}  // namespace lesyn
