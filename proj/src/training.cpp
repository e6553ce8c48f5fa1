#include "lesyn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "lesyn/checkpoint.hpp"
#include "lesyn/losses.hpp"
#include "lesyn/rng.hpp"

namespace lesyn {

namespace {

void accumulate(ParamSet<float>& into, const ParamSet<float>& from) {
    for (std::size_t k = 0; k < into.entries().size(); ++k) {
        auto& a = into.entries()[k].value.data;
        const auto& b = from.entries()[k].value.data;
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    }
}

void zero_tensor(ParamSet<float>& set, std::string_view name) { set[name].fill(0.0f); }

Tensor<float> uniform_histograms(int n, int bins) {
    return Tensor<float>(n, bins, 1, 1, 1.0f / static_cast<float>(bins));
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

std::string to_string(SynthesisMode m) { return m == SynthesisMode::mask_only ? "mask" : "mask+density"; }

SynthesisMode synthesis_mode_from_string(const std::string& s) {
    if (s == "mask" || s == "mask_only") return SynthesisMode::mask_only;
    if (s == "mask+density" || s == "mask_plus_density") return SynthesisMode::mask_plus_density;
    throw ConfigError("unknown mode '" + s + "' (expected mask or mask+density)");
}

void TrainConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite and >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("adam betas must be in [0,1)");
    if (!(gan_weight >= 0.0) || !(l1_weight >= 0.0) || !(disc_weight >= 0.0) || !std::isfinite(gan_weight) ||
        !std::isfinite(l1_weight) || !std::isfinite(disc_weight))
        throw ConfigError("loss weights must be >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
}

void TrainingBatch::validate() const {
    if (masks.n <= 0) throw InvalidArgument("empty batch");
    if (histograms.n != masks.n || targets.n != masks.n) throw InvalidArgument("batch members differ in count");
    require_same_shape(masks, targets, "training batch");
}

TrainingBatch make_batch(const std::vector<LesionRecord>& records, std::span<const std::size_t> indices) {
    if (indices.empty()) throw InvalidArgument("make_batch: no indices");
    const auto& first = records.at(indices[0]);
    const int ps = first.sample.patch_size();
    const int bins = first.histogram.size();
    const int n = static_cast<int>(indices.size());
    TrainingBatch b{Tensor<float>(n, 1, ps, ps), Tensor<float>(n, bins, 1, 1), Tensor<float>(n, 1, ps, ps)};
    for (int i = 0; i < n; ++i) {
        const auto& r = records.at(indices[static_cast<std::size_t>(i)]);
        if (r.sample.patch_size() != ps || r.histogram.size() != bins)
            throw InvalidArgument("make_batch: records differ in patch size or bin count");
        for (int y = 0; y < ps; ++y)
            for (int x = 0; x < ps; ++x) {
                b.masks.at(i, 0, y, x) = r.sample.mask(y, x) ? 1.0f : 0.0f;
                b.targets.at(i, 0, y, x) = 2.0f * r.sample.patch(y, x) - 1.0f;
            }
        for (int k = 0; k < bins; ++k) b.histograms.at(i, k, 0, 0) = static_cast<float>(r.histogram[k]);
    }
    return b;
}

bool TrainState::operator==(const TrainState& o) const {
    return step == o.step && rng == o.rng && gen.tensors == o.gen.tensors && disc.tensors == o.disc.tensors &&
           gen_opt.t == o.gen_opt.t && gen_opt.m == o.gen_opt.m && gen_opt.v == o.gen_opt.v &&
           disc_opt.t == o.disc_opt.t && disc_opt.m == o.disc_opt.m && disc_opt.v == o.disc_opt.v;
}

TrainState train_init(const GeneratorConfig& gen, const DiscriminatorConfig& disc, std::uint64_t seed) {
    if (gen.patch_size != disc.patch_size) throw ConfigError("generator and discriminator patch sizes differ");
    TrainState s;
    s.gen = generator_init<float>(gen, mix_seed(seed, 0x67656e));
    s.disc = discriminator_init<float>(disc, mix_seed(seed, 0x646973));
    s.gen_opt = adam_init(s.gen.tensors);
    s.disc_opt = adam_init(s.disc.tensors);
    s.rng.seed(mix_seed(seed, 0x726e67));
    return s;
}

std::string format_metrics(const StepMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%lld, %.9g, %.9g, %.9g", static_cast<long long>(m.step), m.d_loss, m.g_gan,
                  m.g_l1);
    return buf;
}

StepMetrics train_step(TrainState& state, const TrainingBatch& batch, const TrainConfig& config) {
    batch.validate();
    const std::int64_t step = state.step + 1;
    const bool ablate = config.mode == SynthesisMode::mask_only;
    const Tensor<float> hists =
        ablate ? uniform_histograms(batch.size(), state.gen.config.hist_bins) : batch.histograms;
    const std::uint64_t dropout_seed = state.rng();

    GeneratorTape<float> gtape;
    const Tensor<float> fake = generator_forward(state.gen, batch.masks, hists, Mode::train, dropout_seed, &gtape);

    // Discriminator update; the fakes are constants here.
    DiscriminatorTape<float> real_tape, fake_tape;
    const auto real_logits = discriminator_forward(state.disc, batch.masks, batch.targets, Mode::train, &real_tape, &hists);
    const auto fake_logits = discriminator_forward(state.disc, batch.masks, fake, Mode::train, &fake_tape, &hists);
    Tensor<float> d_real, d_fake;
    const auto dl = d_loss(real_logits, fake_logits, &d_real, &d_fake, config.disc_weight);
    if (!finite(dl.total)) throw TrainingDivergence("non-finite discriminator loss", step);
    auto d_grads = discriminator_backward(state.disc, real_tape, d_real);
    accumulate(d_grads, discriminator_backward(state.disc, fake_tape, d_fake));
    adam_step(state.disc.tensors, d_grads, state.disc_opt, config.adam());
    commit_batchnorm_stats(state.disc, real_tape);
    commit_batchnorm_stats(state.disc, fake_tape);

    // Generator update against the refreshed discriminator.
    DiscriminatorTape<float> g_tape;
    const auto g_logits = discriminator_forward(state.disc, batch.masks, fake, Mode::train, &g_tape, &hists);
    Tensor<float> d_glogits, d_fake_l1;
    const auto gl = g_loss(g_logits, fake, batch.targets, config.gan_weight, config.l1_weight, &d_glogits, &d_fake_l1);
    if (!finite(gl.total)) throw TrainingDivergence("non-finite generator loss", step);
    Tensor<float> d_fake_adv;
    discriminator_backward(state.disc, g_tape, d_glogits, &d_fake_adv);
    layers::add_inplace(d_fake_l1, d_fake_adv);
    auto g_grads = generator_backward(state.gen, gtape, d_fake_l1);
    if (ablate) {
        zero_tensor(g_grads, "hist.dense.weight");
        zero_tensor(g_grads, "hist.dense.bias");
    }
    adam_step(state.gen.tensors, g_grads, state.gen_opt, config.adam());
    commit_batchnorm_stats(state.gen, gtape);

    state.step = step;
    return {step, dl.total, gl.gan_term, gl.l1_term};
}

std::int64_t steps_per_epoch(std::size_t dataset_size, int batch_size) {
    return static_cast<std::int64_t>((dataset_size + static_cast<std::size_t>(batch_size) - 1) /
                                     static_cast<std::size_t>(batch_size));
}

std::int64_t total_steps(std::size_t dataset_size, const TrainConfig& config) {
    const std::int64_t full = config.epochs * steps_per_epoch(dataset_size, config.batch_size);
    return config.max_steps > 0 ? std::min(full, config.max_steps) : full;
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size, const TrainConfig& config, std::int64_t step) {
    if (dataset_size == 0) throw InvalidArgument("empty dataset");
    const std::int64_t per_epoch = steps_per_epoch(dataset_size, config.batch_size);
    const std::int64_t epoch = step / per_epoch;
    const std::int64_t pos = step % per_epoch;
    std::vector<std::size_t> order(dataset_size);
    for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x736875ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::size_t begin = static_cast<std::size_t>(pos) * static_cast<std::size_t>(config.batch_size);
    const std::size_t end = std::min(dataset_size, begin + static_cast<std::size_t>(config.batch_size));
    return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

namespace {

std::string step_dir_name(std::int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%07lld", static_cast<long long>(step));
    return buf;
}

TrainResult run(TrainState state, const std::vector<LesionRecord>& dataset, const TrainConfig& config,
                const TrainOptions& options, bool append_log) {
    if (dataset.empty()) throw InvalidArgument("train: empty dataset");
    config.validate();
    const std::int64_t total = total_steps(dataset.size(), config);
    std::ofstream log;
    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        log.open(options.out_dir / "metrics.log", append_log ? std::ios::app : std::ios::trunc);
        if (!log) throw IoError("cannot open metric log in " + options.out_dir.string());
    }
    TrainResult result;
    while (state.step < total) {
        const auto idx = batch_indices(dataset.size(), config, state.step);
        const auto batch = make_batch(dataset, idx);
        const auto metrics = train_step(state, batch, config);
        result.log.push_back(metrics);
        if (log.is_open()) log << format_metrics(metrics) << '\n' << std::flush;
        if (options.on_step) options.on_step(metrics);
        if (!options.out_dir.empty() && config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 &&
            state.step < total)
            save_checkpoint(options.out_dir / step_dir_name(state.step), state, config);
    }
    if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "final", state, config);
    result.state = std::move(state);
    return result;
}

}  // namespace

TrainResult train(const std::vector<LesionRecord>& dataset, const GeneratorConfig& gen_config,
                  const DiscriminatorConfig& disc_config, const TrainConfig& config, const TrainOptions& options) {
    if (dataset.empty()) throw InvalidArgument("train: empty dataset");
    gen_config.validate();
    disc_config.validate();
    if (dataset.front().sample.patch_size() != gen_config.patch_size)
        throw InvalidArgument("train: dataset patch size differs from generator patch size");
    if (dataset.front().histogram.size() != gen_config.hist_bins)
        throw InvalidArgument("train: dataset histogram bins differ from generator hist_bins");
    return run(train_init(gen_config, disc_config, config.seed), dataset, config, options, false);
}

TrainResult resume_training(TrainState state, const std::vector<LesionRecord>& dataset, const TrainConfig& config,
                            const TrainOptions& options) {
    return run(std::move(state), dataset, config, options, true);
}

}  // namespace lesyn
