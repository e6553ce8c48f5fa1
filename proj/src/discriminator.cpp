#include "lesyn/discriminator.hpp"

#include <random>

namespace lesyn {

namespace {

constexpr kernels::ConvGeometry kHead{4, 1, 1};

std::string block_name(std::size_t j) { return "blk" + std::to_string(j + 1); }

kernels::ConvGeometry block_geometry(const DiscriminatorBlock& b) { return {4, b.stride, 1}; }

}  // namespace

int DiscriminatorConfig::output_size() const {
    int s = patch_size;
    for (const auto& b : schedule) s = block_geometry(b).out_size(s);
    return kHead.out_size(s);
}

void DiscriminatorConfig::validate() const {
    if (patch_size < 2) throw ConfigError("discriminator patch_size must be >= 2");
    if (schedule.empty()) throw ConfigError("discriminator schedule must not be empty");
    int s = patch_size;
    for (const auto& b : schedule) {
        if (b.channels <= 0 || (b.stride != 1 && b.stride != 2)) throw ConfigError("bad discriminator block");
        s = block_geometry(b).out_size(s);
        if (s < 1) throw ConfigError("discriminator schedule shrinks the patch to nothing");
    }
    if (kHead.out_size(s) < 1) throw ConfigError("discriminator logits map would be empty");
    if (!(leaky_slope > 0)) throw ConfigError("leaky_slope must be positive");
}

DiscriminatorConfig DiscriminatorConfig::scaled(int patch_size, int divisor) {
    DiscriminatorConfig c;
    c.patch_size = patch_size;
    for (auto& b : c.schedule) b.channels = std::max(1, b.channels / divisor);
    return c;
}

std::vector<ParamSpec> discriminator_shapes(const DiscriminatorConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> t;
    int in = cfg.input_channels();
    for (std::size_t j = 0; j < cfg.schedule.size(); ++j) {
        const std::string b = block_name(j);
        const int out = cfg.schedule[j].channels;
        t.push_back({b + ".conv.weight", {out, in, 4, 4}, true, ParamInit::normal, b});
        if (j == 0) {
            t.push_back({b + ".conv.bias", {out, 1, 1, 1}, true, ParamInit::zero, b});
        } else {
            t.push_back({b + ".bn.scale", {out, 1, 1, 1}, true, ParamInit::one, b});
            t.push_back({b + ".bn.shift", {out, 1, 1, 1}, true, ParamInit::zero, b});
            t.push_back({b + ".bn.running_mean", {out, 1, 1, 1}, false, ParamInit::zero, b});
            t.push_back({b + ".bn.running_var", {out, 1, 1, 1}, false, ParamInit::one, b});
        }
        in = out;
    }
    t.push_back({"head.conv.weight", {1, in, 4, 4}, true, ParamInit::normal, "head"});
    t.push_back({"head.conv.bias", {1, 1, 1, 1}, true, ParamInit::zero, "head"});
    return t;
}

template <typename T>
DiscriminatorParams<T> discriminator_init(const DiscriminatorConfig& config, std::uint64_t seed) {
    DiscriminatorParams<T> d{config, {}};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (const auto& spec : discriminator_shapes(config)) {
        Tensor<T>& t = d.tensors.add(spec.name, spec.shape, spec.trainable);
        if (spec.init == ParamInit::normal)
            for (auto& v : t.data) v = static_cast<T>(normal(rng));
        else if (spec.init == ParamInit::one)
            t.fill(T(1));
    }
    return d;
}

template <typename T>
Tensor<T> discriminator_forward(const DiscriminatorParams<T>& params, const Tensor<T>& masks, const Tensor<T>& images,
                                Mode mode, DiscriminatorTape<T>* tape_out, const Tensor<T>* histograms) {
    const auto& cfg = params.config;
    const auto& p = params.tensors;
    const int ps = cfg.patch_size;
    if (masks.c != 1 || masks.h != ps || masks.w != ps || !masks.same_shape(images))
        throw InvalidArgument("discriminator: mask and image must both be (n,1," + std::to_string(ps) + "," +
                              std::to_string(ps) + "), got " + shape_string(masks.shape()) + " and " +
                              shape_string(images.shape()));
    DiscriminatorTape<T> local;
    DiscriminatorTape<T>& tape = tape_out ? *tape_out : local;
    tape = DiscriminatorTape<T>{};
    tape.mode = mode;
    tape.blocks.resize(cfg.schedule.size());

    Tensor<T> x = layers::concat_channels(masks, images);
    if (cfg.condition_on_histogram) {
        if (!histograms || histograms->n != masks.n)
            throw InvalidArgument("discriminator: histogram conditioning enabled but no histograms given");
        Tensor<T> plane(masks.n, 1, ps, ps);
        for (int n = 0; n < masks.n; ++n) {
            double mean = 0;
            const std::size_t bins = histograms->item_size();
            for (std::size_t i = 0; i < bins; ++i)
                mean += histograms->item(n)[i] * (static_cast<double>(i) + 0.5) / static_cast<double>(bins);
            std::fill(plane.item(n), plane.item(n) + plane.item_size(), static_cast<T>(2.0 * mean - 1.0));
        }
        x = layers::concat_channels(x, plane);
    }
    const T slope = static_cast<T>(cfg.leaky_slope);
    for (std::size_t j = 0; j < cfg.schedule.size(); ++j)
        x = blocks::conv_block_forward(p, block_name(j), std::move(x), block_geometry(cfg.schedule[j]), j > 0, mode,
                                       slope, tape.blocks[j]);
    tape.head_input = x;
    return kernels::conv2d_forward(x, p["head.conv.weight"], p.span("head.conv.bias"), kHead);
}

template <typename T>
ParamSet<T> discriminator_backward(const DiscriminatorParams<T>& params, const DiscriminatorTape<T>& tape,
                                   const Tensor<T>& grad_logits, Tensor<T>* grad_image) {
    const auto& cfg = params.config;
    const auto& p = params.tensors;
    ParamSet<T> g = p.zeros_like();
    const T slope = static_cast<T>(cfg.leaky_slope);
    Tensor<T> d;
    kernels::conv2d_backward(tape.head_input, p["head.conv.weight"], grad_logits, kHead, &d, g["head.conv.weight"],
                             g.span("head.conv.bias"));
    for (std::size_t j = cfg.schedule.size(); j-- > 0;)
        d = blocks::conv_block_backward(p, block_name(j), tape.blocks[j], std::move(d), block_geometry(cfg.schedule[j]),
                                        slope, g, j > 0 || grad_image != nullptr);
    if (grad_image) {
        Tensor<T> img(d.n, 1, d.h, d.w);
        for (int n = 0; n < d.n; ++n) std::copy(d.plane(n, 1), d.plane(n, 1) + d.plane_size(), img.plane(n, 0));
        *grad_image = std::move(img);
    }
    return g;
}

template <typename T>
void commit_batchnorm_stats(DiscriminatorParams<T>& params, const DiscriminatorTape<T>& tape) {
    if (tape.mode != Mode::train) return;
    for (std::size_t j = 0; j < tape.blocks.size(); ++j) blocks::commit_block_stats(params.tensors, block_name(j), tape.blocks[j]);
}

#define LESYN_INSTANTIATE(T)                                                                                         \
    template DiscriminatorParams<T> discriminator_init<T>(const DiscriminatorConfig&, std::uint64_t);               \
    template Tensor<T> discriminator_forward(const DiscriminatorParams<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                             Mode, DiscriminatorTape<T>*, const Tensor<T>*);                        \
    template ParamSet<T> discriminator_backward(const DiscriminatorParams<T>&, const DiscriminatorTape<T>&,         \
                                                const Tensor<T>&, Tensor<T>*);                                      \
    template void commit_batchnorm_stats(DiscriminatorParams<T>&, const DiscriminatorTape<T>&);
LESYN_INSTANTIATE(float)
LESYN_INSTANTIATE(double)
#undef LESYN_INSTANTIATE

}  // namespace lesyn
