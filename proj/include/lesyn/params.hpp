#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesyn/tensor.hpp"

namespace lesyn {

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> value;
    bool trainable = true;  // false for batch-norm running statistics
};

/// Ordered collection of named tensors. Iteration order is insertion order, which
/// fixes the on-disk layout and the optimizer traversal.
template <typename T>
class ParamSet {
public:
    Tensor<T>& add(std::string name, std::array<int, 4> shape, bool trainable = true, T fill = T(0)) {
        if (index_.contains(name)) throw InvalidArgument("duplicate parameter " + name);
        index_.emplace(name, entries_.size());
        entries_.push_back({std::move(name), Tensor<T>(shape, fill), trainable});
        return entries_.back().value;
    }

    bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

    Tensor<T>& operator[](std::string_view name) { return entries_[lookup(name)].value; }
    const Tensor<T>& operator[](std::string_view name) const { return entries_[lookup(name)].value; }

    std::span<T> span(std::string_view name) { return (*this)[name].data; }
    std::span<const T> span(std::string_view name) const { return (*this)[name].data; }

    std::vector<NamedTensor<T>>& entries() noexcept { return entries_; }
    const std::vector<NamedTensor<T>>& entries() const noexcept { return entries_; }

    std::size_t trainable_count() const {
        std::size_t total = 0;
        for (const auto& e : entries_)
            if (e.trainable) total += e.value.size();
        return total;
    }

    ParamSet zeros_like() const {
        ParamSet out;
        for (const auto& e : entries_) out.add(e.name, e.value.shape(), e.trainable);
        return out;
    }

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& e : entries_) out.add(e.name, e.value.shape(), e.trainable) = e.value.template cast<U>();
        return out;
    }

    bool operator==(const ParamSet& o) const {
        if (entries_.size() != o.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].name != o.entries_[i].name || !(entries_[i].value == o.entries_[i].value)) return false;
        return true;
    }

private:
    std::size_t lookup(std::string_view name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw NotFound("no parameter named " + std::string(name));
        return it->second;
    }

    std::vector<NamedTensor<T>> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    ParamSet<T> m;
    ParamSet<T> v;
    std::int64_t t = 0;
};

template <typename T>
AdamState<T> adam_init(const ParamSet<T>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
}

/// One bias-corrected Adam update over every trainable tensor.
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, const AdamConfig& cfg) {
    ++state.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T step = static_cast<T>(cfg.learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg.epsilon);
    auto& entries = params.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
        if (!entries[k].trainable) continue;
        auto& p = entries[k].value.data;
        const auto& g = grads.entries()[k].value.data;
        auto& m = state.m.entries()[k].value.data;
        auto& v = state.v.entries()[k].value.data;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            p[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
        }
    }
}

}  // namespace lesyn
