#include "lesyn/seg_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lesyn/blocks.hpp"
#include "lesyn/rng.hpp"

namespace lesyn {

namespace {

constexpr kernels::ConvGeometry kSame3{3, 1, 1};
constexpr kernels::ConvGeometry kDown{4, 2, 1};
constexpr kernels::ConvGeometry kPointwise{1, 1, 0};
constexpr int kInputChannels = 2;

std::vector<int> level_channels(const SegConfig& c) {
    std::vector<int> ch;
    for (int i = 0; i < c.depth; ++i) ch.push_back(c.base_channels << i);
    return ch;
}

std::string enc(int i) { return "enc" + std::to_string(i); }
std::string dec(int i) { return "dec" + std::to_string(i); }

struct SegTape {
    std::vector<blocks::BlockTape<float>> encoder;
    std::vector<blocks::BlockTape<float>> decoder;  // indexed by level
    Tensor<float> head_input;
};

Tensor<float> forward(const Segmenter& m, const Tensor<float>& input, SegTape& tape) {
    const auto& c = m.config;
    const auto& p = m.tensors;
    const float slope = static_cast<float>(c.leaky_slope);
    tape.encoder.assign(static_cast<std::size_t>(c.depth), {});
    tape.decoder.assign(static_cast<std::size_t>(c.depth), {});
    std::vector<Tensor<float>> skips;
    Tensor<float> x = input;
    for (int i = 0; i < c.depth; ++i) {
        x = blocks::conv_block_forward(p, enc(i), std::move(x), i == 0 ? kSame3 : kDown, false, Mode::eval, slope,
                                       tape.encoder[static_cast<std::size_t>(i)]);
        skips.push_back(x);
    }
    for (int i = c.depth - 2; i >= 0; --i) {
        auto joined = layers::concat_channels(layers::upsample2x(x), skips[static_cast<std::size_t>(i)]);
        x = blocks::conv_block_forward(p, dec(i), std::move(joined), kSame3, false, Mode::eval, slope,
                                       tape.decoder[static_cast<std::size_t>(i)]);
    }
    tape.head_input = x;
    return kernels::conv2d_forward(x, p["head.conv.weight"], p.span("head.conv.bias"), kPointwise);
}

ParamSet<float> backward(const Segmenter& m, const SegTape& tape, const Tensor<float>& grad_logits) {
    const auto& c = m.config;
    const auto& p = m.tensors;
    const float slope = static_cast<float>(c.leaky_slope);
    const auto ch = level_channels(c);
    ParamSet<float> g = p.zeros_like();
    Tensor<float> grad;
    kernels::conv2d_backward(tape.head_input, p["head.conv.weight"], grad_logits, kPointwise, &grad,
                             g["head.conv.weight"], g.span("head.conv.bias"));
    std::vector<Tensor<float>> skip_grads(static_cast<std::size_t>(c.depth));
    for (int i = 0; i < c.depth - 1; ++i) {
        auto dj = blocks::conv_block_backward(p, dec(i), tape.decoder[static_cast<std::size_t>(i)], std::move(grad),
                                              kSame3, slope, g, true);
        auto [d_up, d_skip] = layers::split_channels(dj, ch[static_cast<std::size_t>(i + 1)]);
        skip_grads[static_cast<std::size_t>(i)] = std::move(d_skip);
        grad = layers::upsample2x_backward(d_up);
    }
    for (int i = c.depth - 1; i >= 0; --i) {
        if (i < c.depth - 1) layers::add_inplace(grad, skip_grads[static_cast<std::size_t>(i)]);
        grad = blocks::conv_block_backward(p, enc(i), tape.encoder[static_cast<std::size_t>(i)], std::move(grad),
                                           i == 0 ? kSame3 : kDown, slope, g, i > 0);
    }
    return g;
}

Tensor<float> make_input(const std::vector<SegSample>& samples, std::span<const std::size_t> idx) {
    const int h = samples[idx[0]].image.rows(), w = samples[idx[0]].image.cols();
    Tensor<float> t(static_cast<int>(idx.size()), kInputChannels, h, w);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& s = samples[idx[k]];
        if (s.image.rows() != h || s.image.cols() != w) throw InvalidArgument("segmentation samples differ in shape");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                t.at(static_cast<int>(k), 0, y, x) = s.image(y, x);
                t.at(static_cast<int>(k), 1, y, x) = s.liver(y, x) ? 1.0f : 0.0f;
            }
    }
    return t;
}

/// Weighted mean BCE over pixels; fills d(loss)/d(logits).
double pixel_bce(const Tensor<float>& logits, const std::vector<SegSample>& samples, std::span<const std::size_t> idx,
                 double pos_weight, Tensor<float>& grad) {
    grad = Tensor<float>(logits.shape());
    const double count = static_cast<double>(logits.size());
    double sum = 0;
    for (int k = 0; k < logits.n; ++k) {
        const auto& truth = samples[idx[static_cast<std::size_t>(k)]].truth;
        for (int y = 0; y < logits.h; ++y)
            for (int x = 0; x < logits.w; ++x) {
                const double l = logits.at(k, 0, y, x);
                const double t = truth(y, x) ? 1.0 : 0.0;
                const double wgt = t > 0 ? pos_weight : 1.0;
                sum += wgt * (std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l))));
                const double sig = l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
                grad.at(k, 0, y, x) = static_cast<float>(wgt * (sig - t) / count);
            }
    }
    return sum / count;
}

std::string format4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

double ConfusionCounts::f1() const noexcept {
    const std::int64_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

ConfusionCounts confusion(const Mask& pred, const Mask& truth) {
    if (!pred.same_shape(truth)) throw InvalidArgument("f1_score: mask shapes differ");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.storage()[i] != 0, t = truth.storage()[i] != 0;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f1_score(const Mask& pred, const Mask& truth) { return confusion(pred, truth).f1(); }

double f1_score(const std::vector<Mask>& preds, const std::vector<Mask>& truths) {
    if (preds.size() != truths.size()) throw InvalidArgument("f1_score: prediction and truth counts differ");
    ConfusionCounts total;
    for (std::size_t i = 0; i < preds.size(); ++i) total += confusion(preds[i], truths[i]);
    return total.f1();
}

void SegConfig::validate() const {
    if (depth < 1) throw ConfigError("segmenter depth must be >= 1");
    if (base_channels <= 0) throw ConfigError("segmenter base_channels must be positive");
    if (epochs <= 0) throw ConfigError("segmenter epochs must be positive");
    if (!(learning_rate >= 0)) throw ConfigError("segmenter learning_rate must be >= 0");
    if (batch_size <= 0) throw ConfigError("segmenter batch_size must be positive");
    if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must be in (0,1)");
    if (!(pos_weight > 0)) throw ConfigError("pos_weight must be positive");
}

std::vector<SegSample> to_seg_samples(const std::vector<SliceSample>& slices) {
    std::vector<SegSample> out;
    out.reserve(slices.size());
    for (const auto& s : slices) {
        SegSample x{normalize_hu(s.slice, s.window), s.liver, Mask(s.liver.rows(), s.liver.cols())};
        for (const auto& l : s.lesions)
            for (std::size_t i = 0; i < l.size(); ++i) x.truth.storage()[i] |= l.storage()[i];
        out.push_back(std::move(x));
    }
    return out;
}

Segmenter segmenter_init(const SegConfig& config, std::uint64_t seed) {
    config.validate();
    Segmenter m{config, {}};
    const auto ch = level_channels(config);
    std::mt19937_64 rng(seed);
    auto conv = [&](const std::string& block, int cout, int cin, int k) {
        // He-style scale for the leaky activations.
        std::normal_distribution<double> d(0.0, std::sqrt(2.0 / (cin * k * k)));
        auto& w = m.tensors.add(block + ".conv.weight", {cout, cin, k, k});
        for (auto& v : w.data) v = static_cast<float>(d(rng));
        m.tensors.add(block + ".conv.bias", {cout, 1, 1, 1});
    };
    for (int i = 0; i < config.depth; ++i)
        conv(enc(i), ch[static_cast<std::size_t>(i)], i == 0 ? kInputChannels : ch[static_cast<std::size_t>(i - 1)],
             i == 0 ? 3 : 4);
    for (int i = config.depth - 2; i >= 0; --i)
        conv(dec(i), ch[static_cast<std::size_t>(i)], ch[static_cast<std::size_t>(i + 1)] + ch[static_cast<std::size_t>(i)], 3);
    conv("head", 1, ch[0], 1);
    return m;
}

Tensor<float> segmenter_forward(const Segmenter& model, const Tensor<float>& input) {
    const int div = 1 << (model.config.depth - 1);
    if (input.c != kInputChannels || input.h % div || input.w % div)
        throw InvalidArgument("segmenter input must be (n,2,H,W) with H,W divisible by " + std::to_string(div));
    SegTape tape;
    return forward(model, input, tape);
}

std::vector<Mask> predict(const Segmenter& model, const std::vector<SegSample>& samples) {
    std::vector<Mask> out;
    const double logit_threshold = std::log(model.config.threshold / (1.0 - model.config.threshold));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::size_t idx[] = {i};
        const auto logits = segmenter_forward(model, make_input(samples, idx));
        Mask m(logits.h, logits.w);
        for (int y = 0; y < logits.h; ++y)
            for (int x = 0; x < logits.w; ++x) m(y, x) = logits.at(0, 0, y, x) > logit_threshold ? 1 : 0;
        out.push_back(std::move(m));
    }
    return out;
}

SegTrainResult train_segmenter(const std::vector<SegSample>& dataset, const SegConfig& config) {
    if (dataset.empty()) throw InvalidArgument("train_segmenter: empty dataset");
    config.validate();
    SegTrainResult out{segmenter_init(config, config.seed), {}};
    auto opt = adam_init(out.model.tensors);
    const AdamConfig adam{config.learning_rate, 0.9, 0.999, 1e-8};
    std::vector<std::size_t> order(dataset.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 shuffle(mix_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle);
        double loss_sum = 0;
        int batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            SegTape tape;
            const auto logits = forward(out.model, make_input(dataset, idx), tape);
            Tensor<float> grad;
            const double loss = pixel_bce(logits, dataset, idx, config.pos_weight, grad);
            if (!std::isfinite(loss))
                throw TrainingDivergence("segmenter loss is not finite", epoch * 1000000 + batches);
            adam_step(out.model.tensors, backward(out.model, tape, grad), opt, adam);
            loss_sum += loss;
            ++batches;
        }
        out.epoch_loss.push_back(loss_sum / batches);
    }
    return out;
}

const ExperimentRow& ExperimentReport::row(const std::string& label) const {
    for (const auto& r : rows)
        if (r.label == label) return r;
    throw NotFound("no report row " + label);
}

std::string ExperimentReport::to_text() const {
    std::ostringstream os;
    os << "training set                F1      publ.   per-seed\n";
    for (const auto& r : rows) {
        char head[96];
        std::snprintf(head, sizeof head, "%-26s  %.4f  %.4f ", r.label.c_str(), r.f1, r.published_f1);
        os << head;
        for (std::size_t i = 0; i < r.per_seed.size(); ++i) os << "  " << r.seeds[i] << ":" << format4(r.per_seed[i]);
        os << "\n";
    }
    os << "(published full-scale results, shown for reference)\n";
    return os.str();
}

std::string ExperimentReport::to_json() const {
    nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < r.per_seed.size(); ++i)
            per_seed.push_back({{"seed", r.seeds[i]}, {"f1", std::stod(format4(r.per_seed[i]))}});
        rows_json.push_back({{"label", r.label},
                             {"f1", std::stod(format4(r.f1))},
                             {"published_f1", r.published_f1},
                             {"per_seed", per_seed}});
    }
    return nlohmann::ordered_json{{"rows", rows_json}}.dump(2);
}

ExperimentReport run_experiment(const std::vector<SegSample>& real, const std::vector<SegSample>& synth_mask,
                                const std::vector<SegSample>& synth_density, const std::vector<SegSample>& test,
                                const SegConfig& config, const std::vector<std::uint64_t>& seeds) {
    if (test.empty()) throw InvalidArgument("run_experiment: empty test set");
    if (seeds.empty()) throw InvalidArgument("run_experiment: no seeds");
    std::vector<Mask> truths;
    for (const auto& s : test) truths.push_back(s.truth);

    struct Source {
        const char* label;
        const std::vector<SegSample>* data;
        double published;
    };
    std::vector<Source> sources;
    if (!real.empty()) sources.push_back({"original", &real, kPublishedF1Original});
    sources.push_back({"mask_synthesis", &synth_mask, kPublishedF1MaskSynthesis});
    sources.push_back({"mask_density_synthesis", &synth_density, kPublishedF1MaskDensitySynthesis});

    ExperimentReport report;
    for (const auto& src : sources) {
        ExperimentRow row{src.label, 0, seeds, {}, src.published};
        for (auto seed : seeds) {
            SegConfig cfg = config;
            cfg.seed = seed;
            const auto trained = train_segmenter(*src.data, cfg);
            row.per_seed.push_back(f1_score(predict(trained.model, test), truths));
        }
        double sum = 0;
        for (double f : row.per_seed) sum += f;
        row.f1 = sum / static_cast<double>(row.per_seed.size());
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace lesyn
