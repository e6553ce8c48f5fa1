#include "lesyn/losses.hpp"

#include <cmath>

namespace lesyn {

template <typename T>
double bce_logits(const Tensor<T>& logits, int target_label, Tensor<T>* grad, double scale) {
    if (logits.data.empty()) throw InvalidArgument("bce_logits: empty logits");
    if (target_label != 0 && target_label != 1) throw InvalidArgument("bce_logits: label must be 0 or 1");
    const double t = target_label;
    const double count = static_cast<double>(logits.data.size());
    if (grad) *grad = Tensor<T>(logits.shape());
    double sum = 0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double l = logits.data[i];
        sum += std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
        if (grad) {
            const double sig = l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
            grad->data[i] = static_cast<T>(scale * (sig - t) / count);
        }
    }
    return sum / count;
}

template <typename T>
DiscriminatorLoss d_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, Tensor<T>* grad_real,
                         Tensor<T>* grad_fake, double weight) {
    DiscriminatorLoss out;
    out.real_term = bce_logits(real_logits, 1, grad_real, weight);
    out.fake_term = bce_logits(fake_logits, 0, grad_fake, weight);
    out.total = out.real_term + out.fake_term;
    return out;
}

template <typename T>
GeneratorLoss g_loss(const Tensor<T>& fake_logits, const Tensor<T>& fake_patch, const Tensor<T>& real_patch,
                     double gan_weight, double l1_weight, Tensor<T>* grad_logits, Tensor<T>* grad_fake) {
    require_same_shape(fake_patch, real_patch, "g_loss");
    GeneratorLoss out;
    out.gan_term = bce_logits(fake_logits, 1, grad_logits, gan_weight);
    const double count = static_cast<double>(fake_patch.data.size());
    if (grad_fake) *grad_fake = Tensor<T>(fake_patch.shape());
    double sum = 0;
    for (std::size_t i = 0; i < fake_patch.data.size(); ++i) {
        const double diff = static_cast<double>(fake_patch.data[i]) - static_cast<double>(real_patch.data[i]);
        sum += std::abs(diff);
        if (grad_fake) grad_fake->data[i] = static_cast<T>(l1_weight * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) / count);
    }
    out.l1_term = sum / count;
    out.total = gan_weight * out.gan_term + l1_weight * out.l1_term;
    return out;
}

template double bce_logits(const Tensor<float>&, int, Tensor<float>*, double);
template double bce_logits(const Tensor<double>&, int, Tensor<double>*, double);
template DiscriminatorLoss d_loss(const Tensor<float>&, const Tensor<float>&, Tensor<float>*, Tensor<float>*, double);
template DiscriminatorLoss d_loss(const Tensor<double>&, const Tensor<double>&, Tensor<double>*, Tensor<double>*,
                                  double);
template GeneratorLoss g_loss(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, double, double,
                              Tensor<float>*, Tensor<float>*);
template GeneratorLoss g_loss(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, double, double,
                              Tensor<double>*, Tensor<double>*);

}  // namespace lesyn
