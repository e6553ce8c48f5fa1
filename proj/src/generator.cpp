#include "lesyn/generator.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <sstream>

#include "lesyn/blocks.hpp"
#include "lesyn/kernels.hpp"
#include "lesyn/rng.hpp"

namespace lesyn {

namespace {

constexpr kernels::ConvGeometry kDown{4, 2, 1};
constexpr kernels::ConvGeometry kSame3{3, 1, 1};
constexpr kernels::ConvGeometry kPointwise{1, 1, 0};

std::string enc_name(int i) { return "enc" + std::to_string(i); }
std::string dec_name(int k) { return "dec" + std::to_string(k); }

void add_bn_specs(std::vector<ParamSpec>& out, const std::string& block, int channels) {
    out.push_back({block + ".bn.scale", {channels, 1, 1, 1}, true, ParamInit::one, block});
    out.push_back({block + ".bn.shift", {channels, 1, 1, 1}, true, ParamInit::zero, block});
    out.push_back({block + ".bn.running_mean", {channels, 1, 1, 1}, false, ParamInit::zero, block});
    out.push_back({block + ".bn.running_var", {channels, 1, 1, 1}, false, ParamInit::one, block});
}

}  // namespace

std::string to_string(BridgeMode m) { return m == BridgeMode::literal ? "literal" : "compressed"; }

BridgeMode bridge_mode_from_string(const std::string& s) {
    if (s == "literal") return BridgeMode::literal;
    if (s == "compressed") return BridgeMode::compressed;
    throw ConfigError("unknown bridge mode '" + s + "'");
}

int GeneratorConfig::resolved_depth() const {
    return depth > 0 ? depth : std::countr_zero(static_cast<unsigned>(patch_size));
}

std::vector<int> GeneratorConfig::encoder_channels() const {
    if (!channel_schedule.empty()) return channel_schedule;
    std::vector<int> ch;
    int c = base_channels;
    for (int i = 0; i < resolved_depth(); ++i) {
        ch.push_back(std::min(c, max_channels));
        c *= 2;
    }
    return ch;
}

std::vector<int> GeneratorConfig::decoder_channels() const {
    const auto ch = encoder_channels();
    const int d = resolved_depth();
    std::vector<int> out;
    for (int k = 1; k <= d; ++k) out.push_back(k < d ? ch[static_cast<std::size_t>(d - k - 1)] : ch[0]);
    return out;
}

void GeneratorConfig::validate() const {
    if (patch_size < 2 || !std::has_single_bit(static_cast<unsigned>(patch_size)))
        throw ConfigError("patch_size must be a power of two >= 2");
    const int max_depth = std::countr_zero(static_cast<unsigned>(patch_size));
    if (depth < 0 || depth > max_depth) throw ConfigError("depth must be in [1, log2(patch_size)]");
    if (!channel_schedule.empty() && static_cast<int>(channel_schedule.size()) != resolved_depth())
        throw ConfigError("channel_schedule length must equal depth");
    for (int c : encoder_channels())
        if (c <= 0) throw ConfigError("channel counts must be positive");
    if (base_channels <= 0 || max_channels <= 0) throw ConfigError("channel counts must be positive");
    if (hist_bins <= 0 || hist_dense_units <= 0 || bridge_units <= 0) throw ConfigError("dense widths must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0,1)");
    if (dropout_blocks < 0) throw ConfigError("dropout_blocks must be >= 0");
    if (!(leaky_slope > 0.0)) throw ConfigError("leaky_slope must be positive");
}

const ParamSpec& ShapeReport::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw NotFound("shape report has no tensor " + name);
}

std::size_t ShapeReport::block_params(const std::string& block) const {
    std::size_t n = 0;
    for (const auto& t : tensors)
        if (t.block == block && t.trainable) n += t.count();
    return n;
}

std::string ShapeReport::to_text() const {
    std::ostringstream s;
    for (const auto& t : tensors)
        s << t.name << ' ' << shape_string(t.shape) << (t.trainable ? "" : " (buffer)") << ' ' << t.count() << '\n';
    s << "encoder_blocks " << encoder_blocks << "\ndecoder_blocks " << decoder_blocks << "\ntrainable_params "
      << trainable_params << "\nbridge_params " << bridge_params << "\ndominant_block " << dominant_block << ' '
      << dominant_params << '\n';
    for (const auto& w : warnings) s << "warning: " << w << '\n';
    return s.str();
}

ShapeReport shape_audit(const GeneratorConfig& cfg) {
    cfg.validate();
    ShapeReport r;
    const int d = cfg.resolved_depth();
    const auto ch = cfg.encoder_channels();
    const auto dch = cfg.decoder_channels();
    const int p = cfg.patch_size;
    auto& t = r.tensors;

    for (int i = 1; i <= d; ++i) {
        const std::string b = enc_name(i);
        const int in = i == 1 ? 1 : ch[static_cast<std::size_t>(i - 2)];
        const int out = ch[static_cast<std::size_t>(i - 1)];
        t.push_back({b + ".conv.weight", {out, in, 4, 4}, true, ParamInit::normal, b});
        if (i == 1)
            t.push_back({b + ".conv.bias", {out, 1, 1, 1}, true, ParamInit::zero, b});
        else
            add_bn_specs(t, b, out);
    }
    for (int k = 1; k <= d; ++k) {
        const std::string b = dec_name(k);
        const int in = k == 1 ? ch[static_cast<std::size_t>(d - 1)]
                              : dch[static_cast<std::size_t>(k - 2)] + ch[static_cast<std::size_t>(d - k)];
        const int out = dch[static_cast<std::size_t>(k - 1)];
        t.push_back({b + ".conv.weight", {out, in, 3, 3}, true, ParamInit::normal, b});
        add_bn_specs(t, b, out);
    }
    const int c0 = dch.back();
    const int flat = cfg.bridge_mode == BridgeMode::compressed ? p * p : c0 * p * p;
    if (cfg.bridge_mode == BridgeMode::compressed) {
        t.push_back({"bridge.reduce.weight", {1, c0, 1, 1}, true, ParamInit::normal, "bridge"});
        t.push_back({"bridge.reduce.bias", {1, 1, 1, 1}, true, ParamInit::zero, "bridge"});
    }
    t.push_back({"bridge.dense.weight", {cfg.bridge_units, flat, 1, 1}, true, ParamInit::normal, "bridge"});
    t.push_back({"bridge.dense.bias", {cfg.bridge_units, 1, 1, 1}, true, ParamInit::zero, "bridge"});
    t.push_back({"hist.dense.weight", {cfg.hist_dense_units, cfg.hist_bins, 1, 1}, true, ParamInit::normal, "hist"});
    t.push_back({"hist.dense.bias", {cfg.hist_dense_units, 1, 1, 1}, true, ParamInit::zero, "hist"});
    t.push_back({"fusion.dense.weight", {p * p, cfg.bridge_units + cfg.hist_dense_units, 1, 1}, true,
                 ParamInit::normal, "fusion"});
    t.push_back({"fusion.dense.bias", {p * p, 1, 1, 1}, true, ParamInit::zero, "fusion"});
    t.push_back({"out.conv.weight", {1, c0 + 1, 3, 3}, true, ParamInit::normal, "out"});
    t.push_back({"out.conv.bias", {1, 1, 1, 1}, true, ParamInit::zero, "out"});

    r.encoder_blocks = d;
    r.decoder_blocks = d;
    for (const auto& x : t)
        if (x.trainable) r.trainable_params += x.count();
    r.bridge_params = r.find("bridge.dense.weight").count() + r.find("bridge.dense.bias").count();

    std::vector<std::string> blocks;
    for (const auto& x : t)
        if (blocks.empty() || blocks.back() != x.block) blocks.push_back(x.block);
    for (const auto& b : blocks) {
        const std::size_t n = r.block_params(b);
        if (n > r.dominant_params) {
            r.dominant_params = n;
            r.dominant_block = b;
        }
    }
    const std::size_t bridge_weights = r.find("bridge.dense.weight").count();
    if (cfg.bridge_mode == BridgeMode::literal && bridge_weights > cfg.bridge_param_budget) {
        std::ostringstream w;
        w << "literal bridge flattens " << c0 << "x" << p << "x" << p << " decoder features into a dense layer of "
          << cfg.bridge_units << " units: " << bridge_weights << " weights ("
          << (100.0 * static_cast<double>(bridge_weights) / static_cast<double>(r.trainable_params))
          << "% of all parameters)" << (r.dominant_block == "bridge" ? ", the dominant parameter block" : "")
          << "; budget is " << cfg.bridge_param_budget;
        r.warnings.push_back(w.str());
    }
    return r;
}

template <typename T>
GeneratorParams<T> generator_init(const GeneratorConfig& config, std::uint64_t seed) {
    const ShapeReport report = shape_audit(config);
    GeneratorParams<T> g{config, {}};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (const auto& spec : report.tensors) {
        Tensor<T>& t = g.tensors.add(spec.name, spec.shape, spec.trainable);
        switch (spec.init) {
            case ParamInit::normal:
                for (auto& v : t.data) v = static_cast<T>(normal(rng));
                break;
            case ParamInit::one: t.fill(T(1)); break;
            case ParamInit::zero: break;
        }
    }
    return g;
}

namespace {

template <typename T>
void check_inputs(const GeneratorConfig& cfg, const Tensor<T>& masks, const Tensor<T>& hists) {
    const int p = cfg.patch_size;
    if (masks.c != 1 || masks.h != p || masks.w != p || masks.n < 1)
        throw InvalidArgument("generator: mask batch must be (n,1," + std::to_string(p) + "," + std::to_string(p) +
                              "), got " + shape_string(masks.shape()));
    if (hists.n != masks.n || static_cast<int>(hists.item_size()) != cfg.hist_bins)
        throw InvalidArgument("generator: histogram batch must be (n," + std::to_string(cfg.hist_bins) + ",1,1), got " +
                              shape_string(hists.shape()));
    for (T v : masks.data)
        if (v != T(0) && v != T(1)) throw InvalidArgument("generator: mask values must be 0 or 1");
    for (int n = 0; n < hists.n; ++n) {
        double total = 0;
        for (std::size_t i = 0; i < hists.item_size(); ++i) {
            const double v = hists.item(n)[i];
            if (!(v >= 0.0)) throw InvalidArgument("generator: histogram has negative or NaN bins");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-4) throw InvalidArgument("generator: histogram is not normalized");
    }
}

}  // namespace

template <typename T>
Tensor<T> generator_forward(const GeneratorParams<T>& params, const Tensor<T>& masks, const Tensor<T>& hists,
                            Mode mode, std::uint64_t dropout_seed, GeneratorTape<T>* tape_out) {
    const GeneratorConfig& cfg = params.config;
    check_inputs(cfg, masks, hists);
    const ParamSet<T>& p = params.tensors;
    const int d = cfg.resolved_depth();
    const int ps = cfg.patch_size;
    const T slope = static_cast<T>(cfg.leaky_slope);

    GeneratorTape<T> local;
    GeneratorTape<T>& tape = tape_out ? *tape_out : local;
    tape = GeneratorTape<T>{};
    tape.mode = mode;
    tape.encoder.resize(static_cast<std::size_t>(d));
    tape.decoder.resize(static_cast<std::size_t>(d));

    std::vector<Tensor<T>> enc(static_cast<std::size_t>(d));
    Tensor<T> x = masks;
    for (int i = 1; i <= d; ++i) {
        x = blocks::conv_block_forward(p, enc_name(i), std::move(x), kDown, i > 1, mode, slope,
                               tape.encoder[static_cast<std::size_t>(i - 1)]);
        enc[static_cast<std::size_t>(i - 1)] = x;
    }

    Tensor<T> dec = enc.back();
    for (int k = 1; k <= d; ++k) {
        auto& bt = tape.decoder[static_cast<std::size_t>(k - 1)];
        Tensor<T> u = dec;
        if (k > 1) {
            const Tensor<T>& skip = enc[static_cast<std::size_t>(d - k)];
            bt.skip_channels = skip.c;
            u = layers::concat_channels(dec, skip);
        }
        dec = blocks::conv_block_forward(p, dec_name(k), layers::upsample2x(u), kSame3, true, mode, slope, bt);
        if (mode == Mode::train && k <= cfg.dropout_blocks && cfg.dropout_rate > 0.0) {
            bt.dropout = layers::dropout_mask<T>(dec.shape(), cfg.dropout_rate, mix_seed(dropout_seed, k));
            dec = layers::multiply(std::move(dec), bt.dropout);
        }
    }
    tape.features = dec;

    // Bridge: dense summary of the final decoder features.
    Tensor<T> flat = cfg.bridge_mode == BridgeMode::compressed
                         ? kernels::conv2d_forward(dec, p["bridge.reduce.weight"], p.span("bridge.reduce.bias"), kPointwise)
                         : dec;
    const int flat_size = static_cast<int>(flat.item_size());
    tape.bridge_input = layers::reshape(std::move(flat), flat_size, 1, 1);
    tape.bridge_activation = layers::leaky_relu(
        kernels::dense_forward(tape.bridge_input, p["bridge.dense.weight"], p.span("bridge.dense.bias")), slope);

    tape.hist_input = hists;
    tape.hist_activation =
        layers::leaky_relu(kernels::dense_forward(hists, p["hist.dense.weight"], p.span("hist.dense.bias")), slope);

    tape.fusion_input = layers::concat_channels(tape.bridge_activation, tape.hist_activation);
    Tensor<T> fusion = kernels::dense_forward(tape.fusion_input, p["fusion.dense.weight"], p.span("fusion.dense.bias"));
    fusion = layers::reshape(std::move(fusion), 1, ps, ps);

    tape.head_input = layers::concat_channels(dec, fusion);
    tape.output = layers::tanh_forward(
        kernels::conv2d_forward(tape.head_input, p["out.conv.weight"], p.span("out.conv.bias"), kSame3));
    return tape.output;
}

template <typename T>
ParamSet<T> generator_backward(const GeneratorParams<T>& params, const GeneratorTape<T>& tape,
                               const Tensor<T>& grad_output) {
    const GeneratorConfig& cfg = params.config;
    const ParamSet<T>& p = params.tensors;
    require_same_shape(grad_output, tape.output, "generator_backward");
    const int d = cfg.resolved_depth();
    const int ps = cfg.patch_size;
    const T slope = static_cast<T>(cfg.leaky_slope);
    ParamSet<T> g = p.zeros_like();

    // Output head.
    Tensor<T> grad = layers::tanh_backward(grad_output, tape.output);
    Tensor<T> d_head;
    kernels::conv2d_backward(tape.head_input, p["out.conv.weight"], grad, kSame3, &d_head, g["out.conv.weight"],
                             g.span("out.conv.bias"));
    auto [d_features, d_fusion_map] = layers::split_channels(d_head, tape.features.c);

    // Fusion dense.
    Tensor<T> d_fusion_in;
    kernels::dense_backward(tape.fusion_input, p["fusion.dense.weight"],
                            layers::reshape(std::move(d_fusion_map), ps * ps, 1, 1), &d_fusion_in,
                            g["fusion.dense.weight"], g.span("fusion.dense.bias"));
    auto [d_bridge_act, d_hist_act] = layers::split_channels(d_fusion_in, tape.bridge_activation.c);

    // Histogram branch (input gradient not needed).
    kernels::dense_backward(tape.hist_input, p["hist.dense.weight"],
                            layers::leaky_relu_backward(std::move(d_hist_act), tape.hist_activation, slope), static_cast<Tensor<T>*>(nullptr),
                            g["hist.dense.weight"], g.span("hist.dense.bias"));

    // Bridge back into the decoder features.
    Tensor<T> d_bridge_in;
    kernels::dense_backward(tape.bridge_input, p["bridge.dense.weight"],
                            layers::leaky_relu_backward(std::move(d_bridge_act), tape.bridge_activation, slope),
                            &d_bridge_in, g["bridge.dense.weight"], g.span("bridge.dense.bias"));
    if (cfg.bridge_mode == BridgeMode::compressed) {
        Tensor<T> d_feat_bridge;
        kernels::conv2d_backward(tape.features, p["bridge.reduce.weight"], layers::reshape(std::move(d_bridge_in), 1, ps, ps),
                                 kPointwise, &d_feat_bridge, g["bridge.reduce.weight"], g.span("bridge.reduce.bias"));
        layers::add_inplace(d_features, d_feat_bridge);
    } else {
        layers::add_inplace(d_features,
                            layers::reshape(std::move(d_bridge_in), tape.features.c, tape.features.h, tape.features.w));
    }

    // Decoder, accumulating skip gradients into the encoder outputs.
    std::vector<Tensor<T>> d_enc(static_cast<std::size_t>(d));
    Tensor<T> d_dec = std::move(d_features);
    for (int k = d; k >= 1; --k) {
        const auto& bt = tape.decoder[static_cast<std::size_t>(k - 1)];
        Tensor<T> d_up = blocks::conv_block_backward(p, dec_name(k), bt, std::move(d_dec), kSame3, slope, g, true);
        Tensor<T> d_u = layers::upsample2x_backward(d_up);
        if (k > 1) {
            auto [d_prev, d_skip] = layers::split_channels(d_u, d_u.c - bt.skip_channels);
            d_enc[static_cast<std::size_t>(d - k)] = std::move(d_skip);
            d_dec = std::move(d_prev);
        } else {
            d_dec = std::move(d_u);
        }
    }

    // Encoder: the deepest block receives only the decoder's first input.
    Tensor<T> d_x = std::move(d_dec);
    for (int i = d; i >= 1; --i) {
        if (i < d) layers::add_inplace(d_x, d_enc[static_cast<std::size_t>(i - 1)]);
        d_x = blocks::conv_block_backward(p, enc_name(i), tape.encoder[static_cast<std::size_t>(i - 1)], std::move(d_x), kDown,
                                  slope, g, i > 1);
    }
    return g;
}

template <typename T>
void commit_batchnorm_stats(GeneratorParams<T>& params, const GeneratorTape<T>& tape) {
    if (tape.mode != Mode::train) return;
    for (std::size_t i = 0; i < tape.encoder.size(); ++i)
        blocks::commit_block_stats(params.tensors, enc_name(static_cast<int>(i) + 1), tape.encoder[i]);
    for (std::size_t k = 0; k < tape.decoder.size(); ++k)
        blocks::commit_block_stats(params.tensors, dec_name(static_cast<int>(k) + 1), tape.decoder[k]);
}

template <typename T>
Tensor<T> masks_to_tensor(std::span<const Mask> masks) {
    if (masks.empty()) throw InvalidArgument("empty mask batch");
    Tensor<T> t(static_cast<int>(masks.size()), 1, masks[0].rows(), masks[0].cols());
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (!masks[i].same_shape(masks[0])) throw InvalidArgument("mask batch has mixed shapes");
        for (std::size_t j = 0; j < masks[i].size(); ++j) t.item(static_cast<int>(i))[j] = masks[i].storage()[j];
    }
    return t;
}

template <typename T>
Tensor<T> histograms_to_tensor(std::span<const DensityHistogram> hists) {
    if (hists.empty()) throw InvalidArgument("empty histogram batch");
    Tensor<T> t(static_cast<int>(hists.size()), hists[0].size(), 1, 1);
    for (std::size_t i = 0; i < hists.size(); ++i) {
        if (hists[i].size() != hists[0].size()) throw InvalidArgument("histogram batch has mixed bin counts");
        for (int j = 0; j < hists[i].size(); ++j) t.item(static_cast<int>(i))[j] = static_cast<T>(hists[i][j]);
    }
    return t;
}

FloatGrid generator_forward(const GeneratorParams<float>& params, const GeneratorInput& input, Mode mode,
                            std::uint64_t dropout_seed) {
    const Tensor<float> out =
        generator_forward(params, masks_to_tensor<float>(std::span(&input.mask, 1)),
                          histograms_to_tensor<float>(std::span(&input.histogram, 1)), mode, dropout_seed);
    return FloatGrid(out.h, out.w, out.data);
}

#define LESYN_INSTANTIATE(T)                                                                                       \
    template GeneratorParams<T> generator_init<T>(const GeneratorConfig&, std::uint64_t);                         \
    template Tensor<T> generator_forward(const GeneratorParams<T>&, const Tensor<T>&, const Tensor<T>&, Mode,     \
                                         std::uint64_t, GeneratorTape<T>*);                                       \
    template ParamSet<T> generator_backward(const GeneratorParams<T>&, const GeneratorTape<T>&, const Tensor<T>&); \
    template void commit_batchnorm_stats(GeneratorParams<T>&, const GeneratorTape<T>&);                           \
    template Tensor<T> masks_to_tensor<T>(std::span<const Mask>);                                                 \
    template Tensor<T> histograms_to_tensor<T>(std::span<const DensityHistogram>);
LESYN_INSTANTIATE(float)
LESYN_INSTANTIATE(double)
#undef LESYN_INSTANTIATE

}  // namespace lesyn
