#pragma once

#include "lesyn/tensor.hpp"

namespace lesyn {

/// Mean binary cross-entropy of sigmoid(logits) against a constant label, in the stable
/// form max(l,0) - l*t + log(1 + exp(-|l|)). Optional gradient w.r.t. the logits.
template <typename T>
double bce_logits(const Tensor<T>& logits, int target_label, Tensor<T>* grad = nullptr, double scale = 1.0);

struct DiscriminatorLoss {
    double total = 0;
    double real_term = 0;
    double fake_term = 0;
};

/// bce(real, 1) + bce(fake, 0); the discriminator minimizes this.
template <typename T>
DiscriminatorLoss d_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, Tensor<T>* grad_real = nullptr,
                         Tensor<T>* grad_fake = nullptr, double weight = 1.0);

struct GeneratorLoss {
    double total = 0;
    double gan_term = 0;  // non-saturating: bce(fake, 1)
    double l1_term = 0;   // mean |fake - real|
};

template <typename T>
GeneratorLoss g_loss(const Tensor<T>& fake_logits, const Tensor<T>& fake_patch, const Tensor<T>& real_patch,
                     double gan_weight, double l1_weight, Tensor<T>* grad_logits = nullptr,
                     Tensor<T>* grad_fake = nullptr);

}  // namespace lesyn
