#include "lesyn/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "lesyn/kernels.hpp"
#include "lesyn/rng.hpp"

namespace lesyn {

namespace {

using Rng = std::mt19937_64;

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void randomize(ParamSet<double>& params, Rng& rng) {
    std::normal_distribution<double> weight(0.0, 0.3);
    std::uniform_real_distribution<double> scale(0.5, 1.5);
    for (auto& e : params.entries()) {
        if (!e.trainable) continue;
        const bool bn_scale = ends_with(e.name, ".bn.scale");
        for (auto& v : e.value.data) v = bn_scale ? scale(rng) : weight(rng);
    }
}

Tensor<double> normal_tensor(std::array<int, 4> shape, Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    Tensor<double> t(shape);
    for (auto& v : t.data) v = d(rng);
    return t;
}

Tensor<double> random_masks(int n, int size, Rng& rng) {
    std::bernoulli_distribution fg(0.4);
    Tensor<double> t(n, 1, size, size);
    for (auto& v : t.data) v = fg(rng) ? 1.0 : 0.0;
    return t;
}

Tensor<double> random_histograms(int n, int bins, Rng& rng) {
    std::uniform_real_distribution<double> d(0.1, 1.0);
    Tensor<double> t(n, bins, 1, 1);
    for (int i = 0; i < n; ++i) {
        double sum = 0;
        for (int b = 0; b < bins; ++b) sum += (t.at(i, b, 0, 0) = d(rng));
        for (int b = 0; b < bins; ++b) t.at(i, b, 0, 0) /= sum;
    }
    return t;
}

double weighted_sum(const Tensor<double>& out, const Tensor<double>& r) {
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * r.data[i];
    return s;
}

TensorAudit compare(const std::string& name, const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double scale = 1e-12, worst = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]));
    }
    return {name, analytic.size(), worst / scale};
}

std::vector<double> central_differences(std::vector<double>& values, double step,
                                        const std::function<double()>& loss) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + step;
        const double up = loss();
        values[i] = saved - step;
        const double down = loss();
        values[i] = saved;
        out[i] = (up - down) / (2 * step);
    }
    return out;
}

void add(AuditReport& report, TensorAudit t) {
    if (report.tensors.empty() || t.max_rel_error >= report.max_rel_error) {
        report.max_rel_error = t.max_rel_error;
        report.worst_tensor = t.name;
    }
    report.tensors.push_back(std::move(t));
}

void audit_params(AuditReport& report, ParamSet<double>& params, const ParamSet<double>& grads, double step,
                  const std::function<double()>& loss) {
    for (std::size_t k = 0; k < params.entries().size(); ++k) {
        auto& e = params.entries()[k];
        if (!e.trainable) continue;
        auto numeric = central_differences(e.value.data, step, loss);
        add(report, compare(e.name, grads.entries()[k].value.data, numeric));
    }
}

}  // namespace

bool AuditReport::covers(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

std::string AuditReport::to_text() const {
    std::ostringstream os;
    for (const auto& t : tensors) os << t.name << " n=" << t.elements << " rel=" << t.max_rel_error << "\n";
    os << "max " << max_rel_error << " (" << worst_tensor << ")\n";
    return os.str();
}

GeneratorConfig tiny_generator_config(BridgeMode bridge) {
    GeneratorConfig c;
    c.patch_size = 8;
    c.depth = 2;
    c.channel_schedule = {3, 4};
    c.hist_bins = 8;
    c.hist_dense_units = 8;
    c.bridge_mode = bridge;
    c.bridge_units = 6;
    return c;
}

DiscriminatorConfig tiny_discriminator_config() {
    DiscriminatorConfig c;
    c.patch_size = 8;
    c.schedule = {{3, 2}, {4, 2}};
    return c;
}

AuditReport audit_generator(const GeneratorConfig& config, std::uint64_t seed, double step) {
    auto params = generator_init<double>(config, seed);
    Rng rng(mix_seed(seed, 1));
    randomize(params.tensors, rng);
    const int n = 2, ps = config.patch_size;
    auto masks = random_masks(n, ps, rng);
    auto hists = random_histograms(n, config.hist_bins, rng);
    auto r = normal_tensor({n, 1, ps, ps}, rng);
    const std::uint64_t dropout_seed = mix_seed(seed, 2);

    GeneratorTape<double> tape;
    generator_forward(params, masks, hists, Mode::train, dropout_seed, &tape);
    auto grads = generator_backward(params, tape, r);

    AuditReport report;
    audit_params(report, params.tensors, grads, step, [&] {
        return weighted_sum(generator_forward(params, masks, hists, Mode::train, dropout_seed), r);
    });
    return report;
}

AuditReport audit_discriminator(const DiscriminatorConfig& config, std::uint64_t seed, double step) {
    auto params = discriminator_init<double>(config, seed);
    Rng rng(mix_seed(seed, 1));
    randomize(params.tensors, rng);
    const int n = 2, ps = config.patch_size;
    auto masks = random_masks(n, ps, rng);
    auto images = normal_tensor({n, 1, ps, ps}, rng);
    auto hists = random_histograms(n, kDensityBins, rng);
    const int s = config.output_size();
    auto r = normal_tensor({n, 1, s, s}, rng);

    DiscriminatorTape<double> tape;
    discriminator_forward(params, masks, images, Mode::train, &tape, &hists);
    Tensor<double> grad_image;
    auto grads = discriminator_backward(params, tape, r, &grad_image);

    auto loss = [&] { return weighted_sum(discriminator_forward(params, masks, images, Mode::train, static_cast<DiscriminatorTape<double>*>(nullptr), &hists), r); };
    AuditReport report;
    audit_params(report, params.tensors, grads, step, loss);
    add(report, compare("input.image", grad_image.data, central_differences(images.data, step, loss)));
    return report;
}

AuditReport audit_linear(std::uint64_t seed, double step) {
    Rng rng(seed);
    auto x = normal_tensor({3, 5, 1, 1}, rng);
    auto w = normal_tensor({4, 5, 1, 1}, rng);
    auto b = normal_tensor({1, 4, 1, 1}, rng);
    auto r = normal_tensor({3, 4, 1, 1}, rng);
    Tensor<double> dw(w.shape()), db(b.shape());
    kernels::dense_backward<double>(x, w, r, nullptr, dw, db.data);
    auto loss = [&] { return weighted_sum(kernels::dense_forward<double>(x, w, b.data), r); };
    AuditReport report;
    add(report, compare("linear.weight", dw.data, central_differences(w.data, step, loss)));
    add(report, compare("linear.bias", db.data, central_differences(b.data, step, loss)));
    return report;
}

AuditReport finite_difference_audit(AuditTarget target, std::uint64_t seed) {
    switch (target) {
        case AuditTarget::generator: return audit_generator(tiny_generator_config(), seed);
        case AuditTarget::discriminator: return audit_discriminator(tiny_discriminator_config(), seed);
        case AuditTarget::linear: break;
    }
    return audit_linear(seed);
}

}  // namespace lesyn
