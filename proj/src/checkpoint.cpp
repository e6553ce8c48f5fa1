#include "lesyn/checkpoint.hpp"

#include <cstdio>
#include <sstream>

#include "lesyn/digest.hpp"
#include "lesyn/lsf.hpp"

namespace fs = std::filesystem;

namespace lesyn {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

int to_int(const MetaRecord& m, const std::string& key) {
    try {
        return std::stoi(m.get(key));
    } catch (const std::logic_error&) {
        throw ConfigError("manifest: bad integer for " + key);
    }
}

double to_double(const MetaRecord& m, const std::string& key) {
    try {
        return std::stod(m.get(key));
    } catch (const std::logic_error&) {
        throw ConfigError("manifest: bad number for " + key);
    }
}

std::int64_t to_int64(const MetaRecord& m, const std::string& key) {
    try {
        return std::stoll(m.get(key));
    } catch (const std::logic_error&) {
        throw ConfigError("manifest: bad integer for " + key);
    }
}

void save_set(const fs::path& dir, const ParamSet<float>& set) {
    fs::create_directories(dir);
    for (const auto& e : set.entries()) lsf::write_tensor(dir / (e.name + ".lsf"), e.value);
}

void load_set(const fs::path& dir, ParamSet<float>& set) {
    for (auto& e : set.entries()) e.value = lsf::read_tensor<float>(dir / (e.name + ".lsf"), e.value.shape());
}

void write_train_config(MetaRecord& m, const TrainConfig& c) {
    m.set("train.epochs", std::to_string(c.epochs));
    m.set("train.learning_rate", fmt(c.learning_rate));
    m.set("train.adam_beta1", fmt(c.adam_beta1));
    m.set("train.adam_beta2", fmt(c.adam_beta2));
    m.set("train.gan_weight", fmt(c.gan_weight));
    m.set("train.l1_weight", fmt(c.l1_weight));
    m.set("train.disc_weight", fmt(c.disc_weight));
    m.set("train.batch_size", std::to_string(c.batch_size));
    m.set("train.checkpoint_every", std::to_string(c.checkpoint_every));
    m.set("train.max_steps", std::to_string(c.max_steps));
    m.set("seed", std::to_string(c.seed));
    m.set("mode", to_string(c.mode));
}

TrainConfig read_train_config(const MetaRecord& m) {
    TrainConfig c;
    c.epochs = to_int(m, "train.epochs");
    c.learning_rate = to_double(m, "train.learning_rate");
    c.adam_beta1 = to_double(m, "train.adam_beta1");
    c.adam_beta2 = to_double(m, "train.adam_beta2");
    c.gan_weight = to_double(m, "train.gan_weight");
    c.l1_weight = to_double(m, "train.l1_weight");
    c.disc_weight = to_double(m, "train.disc_weight");
    c.batch_size = to_int(m, "train.batch_size");
    c.checkpoint_every = to_int(m, "train.checkpoint_every");
    c.max_steps = to_int64(m, "train.max_steps");
    c.seed = std::stoull(m.get("seed"));
    c.mode = synthesis_mode_from_string(m.get("mode"));
    return c;
}

MetaRecord read_manifest(const fs::path& dir) {
    if (!is_checkpoint(dir)) throw NotFound("no checkpoint at " + dir.string());
    auto m = MetaRecord::load(dir / "manifest");
    if (m.get_or("kind", "") != "lesyn-checkpoint") throw IoError("not a checkpoint manifest: " + dir.string());
    if (to_int(m, "format_version") != kCheckpointFormat)
        throw IoError("unsupported checkpoint format version in " + dir.string());
    return m;
}

}  // namespace

void write_config(MetaRecord& m, const GeneratorConfig& c) {
    m.set("gen.patch_size", std::to_string(c.patch_size));
    m.set("gen.depth", std::to_string(c.resolved_depth()));
    m.set("gen.channels", join(c.encoder_channels()));
    m.set("gen.hist_bins", std::to_string(c.hist_bins));
    m.set("gen.hist_dense_units", std::to_string(c.hist_dense_units));
    m.set("gen.bridge_mode", to_string(c.bridge_mode));
    m.set("gen.bridge_units", std::to_string(c.bridge_units));
    m.set("gen.dropout_rate", fmt(c.dropout_rate));
    m.set("gen.dropout_blocks", std::to_string(c.dropout_blocks));
    m.set("gen.leaky_slope", fmt(c.leaky_slope));
}

GeneratorConfig read_generator_config(const MetaRecord& m) {
    GeneratorConfig c;
    c.patch_size = to_int(m, "gen.patch_size");
    c.depth = to_int(m, "gen.depth");
    for (const auto& s : split(m.get("gen.channels"), ',')) c.channel_schedule.push_back(std::stoi(s));
    c.hist_bins = to_int(m, "gen.hist_bins");
    c.hist_dense_units = to_int(m, "gen.hist_dense_units");
    c.bridge_mode = bridge_mode_from_string(m.get("gen.bridge_mode"));
    c.bridge_units = to_int(m, "gen.bridge_units");
    c.dropout_rate = to_double(m, "gen.dropout_rate");
    c.dropout_blocks = to_int(m, "gen.dropout_blocks");
    c.leaky_slope = to_double(m, "gen.leaky_slope");
    c.validate();
    return c;
}

void write_config(MetaRecord& m, const DiscriminatorConfig& c) {
    std::string schedule;
    for (std::size_t i = 0; i < c.schedule.size(); ++i)
        schedule += (i ? "," : "") + std::to_string(c.schedule[i].channels) + "s" + std::to_string(c.schedule[i].stride);
    m.set("disc.patch_size", std::to_string(c.patch_size));
    m.set("disc.schedule", schedule);
    m.set("disc.leaky_slope", fmt(c.leaky_slope));
    m.set("disc.condition_on_histogram", c.condition_on_histogram ? "1" : "0");
}

DiscriminatorConfig read_discriminator_config(const MetaRecord& m) {
    DiscriminatorConfig c;
    c.patch_size = to_int(m, "disc.patch_size");
    c.schedule.clear();
    for (const auto& item : split(m.get("disc.schedule"), ',')) {
        const auto parts = split(item, 's');
        if (parts.size() != 2) throw ConfigError("manifest: bad discriminator schedule entry '" + item + "'");
        c.schedule.push_back({std::stoi(parts[0]), std::stoi(parts[1])});
    }
    c.leaky_slope = to_double(m, "disc.leaky_slope");
    c.condition_on_histogram = m.get("disc.condition_on_histogram") == "1";
    c.validate();
    return c;
}

std::string summarize(const GeneratorConfig& c) {
    std::ostringstream os;
    os << "patch " << c.patch_size << ", depth " << c.resolved_depth() << ", channels " << join(c.encoder_channels())
       << ", " << to_string(c.bridge_mode) << " bridge " << c.bridge_units << ", hist " << c.hist_bins << "->"
       << c.hist_dense_units;
    return os.str();
}

bool is_checkpoint(const fs::path& dir) { return fs::is_regular_file(dir / "manifest"); }

void save_checkpoint(const fs::path& dir, const TrainState& state, const TrainConfig& config) {
    fs::create_directories(dir);
    MetaRecord m;
    m.set("kind", "lesyn-checkpoint");
    m.set("format_version", std::to_string(kCheckpointFormat));
    m.set("step", std::to_string(state.step));
    m.set("gen_opt.t", std::to_string(state.gen_opt.t));
    m.set("disc_opt.t", std::to_string(state.disc_opt.t));
    write_config(m, state.gen.config);
    write_config(m, state.disc.config);
    write_train_config(m, config);
    save_set(dir / "gen", state.gen.tensors);
    save_set(dir / "disc", state.disc.tensors);
    save_set(dir / "optim" / "gen_m", state.gen_opt.m);
    save_set(dir / "optim" / "gen_v", state.gen_opt.v);
    save_set(dir / "optim" / "disc_m", state.disc_opt.m);
    save_set(dir / "optim" / "disc_v", state.disc_opt.v);
    std::ostringstream rng;
    rng << state.rng;
    lsf::write_file(dir / "rng", rng.str() + "\n");
    m.save(dir / "manifest");
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
    const auto m = read_manifest(dir);
    LoadedCheckpoint out;
    out.config = read_train_config(m);
    auto& s = out.state;
    s.gen = generator_init<float>(read_generator_config(m), 0);
    s.disc = discriminator_init<float>(read_discriminator_config(m), 0);
    s.gen_opt = adam_init(s.gen.tensors);
    s.disc_opt = adam_init(s.disc.tensors);
    load_set(dir / "gen", s.gen.tensors);
    load_set(dir / "disc", s.disc.tensors);
    load_set(dir / "optim" / "gen_m", s.gen_opt.m);
    load_set(dir / "optim" / "gen_v", s.gen_opt.v);
    load_set(dir / "optim" / "disc_m", s.disc_opt.m);
    load_set(dir / "optim" / "disc_v", s.disc_opt.v);
    s.step = to_int64(m, "step");
    s.gen_opt.t = to_int64(m, "gen_opt.t");
    s.disc_opt.t = to_int64(m, "disc_opt.t");
    std::istringstream rng(lsf::read_file(dir / "rng"));
    rng >> s.rng;
    if (!rng) throw IoError("corrupt rng state in " + dir.string());
    return out;
}

GeneratorSnapshot load_generator(const fs::path& dir) {
    const auto m = read_manifest(dir);
    GeneratorSnapshot out;
    out.params = generator_init<float>(read_generator_config(m), 0);
    load_set(dir / "gen", out.params.tensors);
    out.mode = synthesis_mode_from_string(m.get("mode"));
    out.step = to_int64(m, "step");
    out.digest = directory_digest(dir);
    return out;
}

}  // namespace lesyn
