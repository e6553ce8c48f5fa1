// lesyn: command-line entry point for every pipeline stage.
// Exit codes: 0 success, 1 user error (bad flags, missing or invalid input), 2 internal error.

#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "lesyn/checkpoint.hpp"
#include "lesyn/dataset.hpp"
#include "lesyn/digest.hpp"
#include "lesyn/gradcheck.hpp"
#include "lesyn/implant.hpp"
#include "lesyn/lsf.hpp"
#include "lesyn/nifti.hpp"
#include "lesyn/phantom.hpp"
#include "lesyn/png.hpp"
#include "lesyn/rng.hpp"
#include "lesyn/seg_eval.hpp"
#include "lesyn/service.hpp"
#include "lesyn/synthesis.hpp"

namespace fs = std::filesystem;
using namespace lesyn;

namespace {

class UserError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

Mask load_mask(const fs::path& p) {
    if (fs::is_directory(p)) return lsf::read_mask(p / "mask.lsf");
    if (p.extension() == ".png") {
        const auto g = png::decode_gray(lsf::read_file(p));
        Mask m(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) m.storage()[i] = g.storage()[i] >= 128 ? 1 : 0;
        return m;
    }
    return lsf::read_mask(p);
}

DensityHistogram load_histogram(const std::string& spec) {
    const fs::path p(spec);
    if (fs::exists(p)) {
        if (fs::is_directory(p)) return read_lesion_record(p).histogram;
        if (p.extension() == ".lsf") {
            const auto a = lsf::read(p);
            return DensityHistogram::from_weights({a.data.begin(), a.data.end()});
        }
        std::istringstream in(lsf::read_file(p));
        std::vector<double> v;
        std::string tok;
        while (in >> tok) {
            for (auto& ch : tok)
                if (ch == ',') ch = ' ';
            std::istringstream t(tok);
            double x;
            while (t >> x) v.push_back(x);
        }
        return DensityHistogram(std::move(v), 1e-4);
    }
    return make_preset(parse_preset(spec));
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
    if (out.empty()) throw UserError("--seeds needs at least one seed");
    return out;
}

void print_summary(const std::string& what, std::size_t n, const fs::path& where) {
    std::cout << what << ": " << n << " sample(s) -> " << where.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Controllable liver-lesion synthesis: data, training, synthesis, implanting, evaluation"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (0: runtime default)");

    // make-phantoms
    auto* mk = app.add_subcommand("make-phantoms", "Write procedural phantom slices as a slice dataset");
    fs::path mk_out;
    std::size_t mk_n = 10;
    std::uint64_t mk_seed = 0;
    PhantomConfig mk_cfg;
    mk->add_option("--out", mk_out, "Output dataset directory")->required();
    mk->add_option("--n", mk_n, "Number of slices");
    mk->add_option("--seed", mk_seed, "Seed");
    mk->add_option("--size", mk_cfg.rows, "Slice side length");
    mk->add_option("--min-lesions", mk_cfg.min_lesions);
    mk->add_option("--max-lesions", mk_cfg.max_lesions);
    mk->add_option("--radius-min", mk_cfg.lesion_radius_min);
    mk->add_option("--radius-max", mk_cfg.lesion_radius_max);

    // import-nifti
    auto* imp = app.add_subcommand("import-nifti", "Convert a CT volume and its label volume to slice samples");
    fs::path imp_ct, imp_labels, imp_out;
    std::string imp_window = "-100,400";
    imp->add_option("--volume", imp_ct, "CT volume (.nii/.nii.gz)")->required();
    imp->add_option("--labels", imp_labels, "Label volume: 1 liver, 2 lesion")->required();
    imp->add_option("--out", imp_out, "Output dataset directory")->required();
    imp->add_option("--window", imp_window, "HU window lo,hi");

    // prepare-data
    auto* prep = app.add_subcommand("prepare-data", "Decompose lesions into (patch, mask, histogram) samples");
    fs::path prep_in, prep_out;
    std::string prep_window;
    int prep_patch = 64;
    prep->add_option("--input", prep_in, "Slice dataset directory")->required();
    prep->add_option("--output", prep_out, "Lesion dataset directory")->required();
    prep->add_option("--window", prep_window, "HU window lo,hi (default: per-sample meta)");
    prep->add_option("--patch-size", prep_patch, "Patch side length");

    // train
    auto* tr = app.add_subcommand("train", "Adversarial training of the lesion generator");
    fs::path tr_data, tr_out, tr_resume;
    std::string tr_mode = "mask+density";
    TrainConfig tc;
    GeneratorConfig gc;
    int tr_disc_div = 4;
    std::string tr_bridge = "compressed";
    gc.base_channels = 16;
    gc.max_channels = 128;
    tr->add_option("--dataset", tr_data, "Lesion dataset directory")->required();
    tr->add_option("--mode", tr_mode, "mask | mask+density");
    tr->add_option("--epochs", tc.epochs, "Epochs");
    tr->add_option("--lr", tc.learning_rate, "Adam learning rate");
    tr->add_option("--beta1", tc.adam_beta1, "Adam beta1");
    tr->add_option("--batch-size", tc.batch_size, "Batch size");
    tr->add_option("--max-steps", tc.max_steps, "Stop after this many steps (0: full schedule)");
    tr->add_option("--checkpoint-every", tc.checkpoint_every, "Checkpoint period in steps (0: final only)");
    tr->add_option("--l1-weight", tc.l1_weight, "L1 weight");
    tr->add_option("--gan-weight", tc.gan_weight, "GAN weight");
    tr->add_option("--seed", tc.seed, "Seed");
    tr->add_option("--base-channels", gc.base_channels, "Generator base width");
    tr->add_option("--max-channels", gc.max_channels, "Generator width cap");
    tr->add_option("--bridge", tr_bridge, "compressed | literal");
    tr->add_option("--bridge-units", gc.bridge_units, "Bridge dense width");
    tr->add_option("--disc-divisor", tr_disc_div, "Divide the default discriminator widths by this");
    tr->add_option("--resume", tr_resume, "Continue from a checkpoint directory");
    tr->add_option("--out", tr_out, "Output directory")->required();

    // synthesize
    auto* syn = app.add_subcommand("synthesize", "Synthesize one lesion from a mask and a histogram");
    fs::path syn_ckpt, syn_mask, syn_out;
    std::string syn_hist, syn_encoding = "normalized", syn_window = "-100,400";
    syn->add_option("--checkpoint", syn_ckpt)->required();
    syn->add_option("--mask", syn_mask, "Mask (.lsf, .png or lesion sample directory)")->required();
    syn->add_option("--hist", syn_hist, "Preset (delta:50, unimodal:50,5, bimodal:20,80,3,3) or file")->required();
    syn->add_option("--encoding", syn_encoding, "normalized | hu");
    syn->add_option("--window", syn_window, "HU window for --encoding hu");
    syn->add_option("--out", syn_out, "Output .png or .lsf")->required();

    // grid
    auto* grid = app.add_subcommand("grid", "Render a histogram x shape control grid");
    fs::path grid_ckpt, grid_out;
    std::vector<fs::path> grid_masks;
    std::vector<std::string> grid_hists;
    grid->add_option("--checkpoint", grid_ckpt)->required();
    grid->add_option("--mask", grid_masks, "Masks (columns)")->required();
    grid->add_option("--hist", grid_hists, "Histograms (rows)")->required();
    grid->add_option("--out", grid_out, "Output .png or .lsf")->required();

    // build-dataset
    auto* bd = app.add_subcommand("build-dataset", "Implant synthesized lesions into healthy slices");
    fs::path bd_healthy, bd_shapes, bd_hists, bd_ckpt, bd_out;
    std::size_t bd_n = 50;
    std::string bd_mode = "mask+density";
    std::uint64_t bd_seed = 0;
    BuildOptions bd_opts;
    bd->add_option("--healthy", bd_healthy, "Slice dataset; slices with lesions are skipped")->required();
    bd->add_option("--shapes", bd_shapes, "Lesion dataset supplying masks")->required();
    bd->add_option("--hists", bd_hists, "Lesion dataset supplying histograms (default: --shapes)");
    bd->add_option("--checkpoint", bd_ckpt)->required();
    bd->add_option("--n", bd_n, "Number of samples");
    bd->add_option("--mode", bd_mode, "mask | mask+density");
    bd->add_option("--seed", bd_seed);
    bd->add_option("--scale-min", bd_opts.ranges.scale_min);
    bd->add_option("--scale-max", bd_opts.ranges.scale_max);
    bd->add_option("--feather-sigma", bd_opts.ranges.feather_sigma);
    bd->add_option("--max-retries", bd_opts.ranges.max_retries);
    bd->add_option("--out", bd_out)->required();

    // eval-seg
    auto* ev = app.add_subcommand("eval-seg", "Segmentation F1 for real vs synthetic training sets");
    fs::path ev_real, ev_mask, ev_density, ev_test, ev_json;
    std::string ev_seeds = "0,1,2";
    SegConfig sc;
    ev->add_option("--real", ev_real, "Real slice dataset (optional)");
    ev->add_option("--synth-mask", ev_mask)->required();
    ev->add_option("--synth-density", ev_density)->required();
    ev->add_option("--test", ev_test)->required();
    ev->add_option("--seeds", ev_seeds, "Comma-separated seeds");
    ev->add_option("--epochs", sc.epochs);
    ev->add_option("--base-channels", sc.base_channels);
    ev->add_option("--depth", sc.depth);
    ev->add_option("--lr", sc.learning_rate);
    ev->add_option("--batch-size", sc.batch_size);
    ev->add_option("--pos-weight", sc.pos_weight);
    ev->add_option("--threshold", sc.threshold);
    ev->add_option("--json", ev_json, "Also write the report as JSON");

    // serve
    auto* sv = app.add_subcommand("serve", "Run the HTTP service");
    std::string sv_addr = "127.0.0.1:8080";
    ServiceConfig sv_cfg;
    sv->add_option("--addr", sv_addr, "host:port");
    sv->add_option("--checkpoints", sv_cfg.checkpoints)->required();
    sv->add_option("--shapes", sv_cfg.shapes);
    sv->add_option("--slices", sv_cfg.slices, "Slice dataset for implant previews");

    // utilities
    auto* dg = app.add_subcommand("digest", "SHA-256 digest of a directory tree");
    fs::path dg_dir;
    dg->add_option("dir", dg_dir)->required();
    auto* au = app.add_subcommand("audit", "Finite-difference gradient audit at the tiny configs");
    std::uint64_t au_seed = 0;
    au->add_option("--seed", au_seed);
    auto* sa = app.add_subcommand("shape-audit", "List every generator tensor for a configuration");
    GeneratorConfig sa_cfg;
    std::string sa_bridge = "compressed";
    sa->add_option("--patch-size", sa_cfg.patch_size);
    sa->add_option("--base-channels", sa_cfg.base_channels);
    sa->add_option("--max-channels", sa_cfg.max_channels);
    sa->add_option("--bridge", sa_bridge);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (threads > 0) omp_set_num_threads(threads);

    try {
        if (*mk) {
            mk_cfg.cols = mk_cfg.rows;
            for (std::size_t i = 0; i < mk_n; ++i) {
                auto ph = generate_phantom(mix_seed(mk_seed, i), mk_cfg);
                write_slice_sample(mk_out / sample_dir_name(i), {ph.slice, ph.liver, ph.lesions, HuWindow{0.0, 1.0}});
            }
            print_summary("phantoms", mk_n, mk_out);
        } else if (*imp) {
            const auto samples = nifti::import_labeled_volume(nifti::read(imp_ct), nifti::read(imp_labels),
                                                              parse_window(imp_window));
            for (std::size_t i = 0; i < samples.size(); ++i) write_slice_sample(imp_out / sample_dir_name(i), samples[i]);
            print_summary("slices", samples.size(), imp_out);
        } else if (*prep) {
            const auto slices = read_slice_dataset(prep_in);
            HuWindow w;
            if (!prep_window.empty()) w = parse_window(prep_window);
            const auto records = decompose_slices(slices, prep_patch, prep_window.empty() ? nullptr : &w);
            std::size_t rescaled = 0;
            const HuWindow record_window = prep_window.empty() && !slices.empty() ? slices.front().window : w;
            for (std::size_t i = 0; i < records.size(); ++i) {
                write_lesion_record(prep_out / sample_dir_name(i), records[i], record_window);
                rescaled += records[i].sample.rescaled ? 1 : 0;
            }
            std::cout << "slices: " << slices.size() << "\nlesions: " << records.size() << "\nrescaled: " << rescaled
                      << "\n";
            print_summary("lesion samples", records.size(), prep_out);
        } else if (*tr) {
            const auto data = read_lesion_dataset(tr_data);
            if (data.empty()) throw UserError("dataset " + tr_data.string() + " has no samples");
            tc.mode = synthesis_mode_from_string(tr_mode);
            TrainOptions opts;
            opts.out_dir = tr_out;
            opts.on_step = [](const StepMetrics& m) {
                if (m.step % 100 == 0) std::cout << format_metrics(m) << std::endl;
            };
            TrainResult result;
            if (!tr_resume.empty()) {
                auto loaded = load_checkpoint(tr_resume);
                std::cout << "resuming at step " << loaded.state.step << "\n";
                result = resume_training(std::move(loaded.state), data, loaded.config, opts);
            } else {
                gc.patch_size = data.front().sample.patch_size();
                gc.hist_bins = data.front().histogram.size();
                gc.bridge_mode = bridge_mode_from_string(tr_bridge);
                const auto dc = DiscriminatorConfig::scaled(gc.patch_size, tr_disc_div);
                tc.validate();
                std::cout << "mode " << to_string(tc.mode) << ", epochs " << tc.epochs << ", lr " << tc.learning_rate
                          << ", beta1 " << tc.adam_beta1 << ", batch " << tc.batch_size << ", gan weight "
                          << tc.gan_weight << ", l1 weight " << tc.l1_weight << ", seed " << tc.seed << "\n"
                          << "generator: " << summarize(gc) << "\n"
                          << "steps: " << total_steps(data.size(), tc) << "\n";
                result = train(data, gc, dc, tc, opts);
            }
            std::cout << "final checkpoint " << (tr_out / "final").string() << " step " << result.state.step
                      << " digest " << directory_digest(tr_out / "final") << "\n";
        } else if (*syn) {
            SynthesisRequest req{load_mask(syn_mask), load_histogram(syn_hist)};
            if (syn_encoding == "hu") {
                req.encoding = OutputEncoding::windowed_hu;
                req.window = parse_window(syn_window);
            } else if (syn_encoding != "normalized") {
                throw UserError("--encoding must be normalized or hu");
            }
            const auto out = synthesize(syn_ckpt, req);
            if (req.encoding == OutputEncoding::windowed_hu && syn_out.extension() == ".png")
                export_image(syn_out, normalize_hu(out, req.window));
            else
                export_image(syn_out, out);
            std::cout << "wrote " << syn_out.string() << "\n";
        } else if (*grid) {
            std::vector<Mask> masks;
            for (const auto& m : grid_masks) masks.push_back(load_mask(m));
            std::vector<DensityHistogram> hists;
            for (const auto& h : grid_hists) hists.push_back(load_histogram(h));
            const auto img = render_grid(load_generator(grid_ckpt), masks, hists);
            export_image(grid_out, img);
            std::cout << "wrote " << grid_out.string() << " (" << img.rows() << "x" << img.cols() << ")\n";
        } else if (*bd) {
            std::vector<SliceSample> healthy;
            for (auto& s : read_slice_dataset(bd_healthy))
                if (s.lesions.empty()) healthy.push_back(std::move(s));
            if (healthy.empty()) throw UserError("no lesion-free slices in " + bd_healthy.string());
            const auto shapes = read_lesion_dataset(bd_shapes);
            const auto hist_src = bd_hists.empty() ? shapes : read_lesion_dataset(bd_hists);
            std::vector<Mask> shape_pool;
            for (const auto& r : shapes) shape_pool.push_back(r.sample.mask);
            std::vector<DensityHistogram> hist_pool;
            for (const auto& r : hist_src) hist_pool.push_back(r.histogram);
            const auto model = load_generator(bd_ckpt);
            const auto mode = synthesis_mode_from_string(bd_mode);
            const auto report =
                build_synthetic_dataset(healthy, shape_pool, hist_pool, model, bd_n, mode, bd_seed, bd_opts);
            write_synthetic_dataset(bd_out, report, mode, bd_seed, model.digest);
            std::cout << "healthy slices: " << healthy.size() << "\nplacement failures: " << report.total_failures
                      << "\n";
            print_summary("synthetic", report.samples.size(), bd_out);
            std::cout << "digest " << directory_digest(bd_out) << "\n";
        } else if (*ev) {
            const auto load = [](const fs::path& p) { return to_seg_samples(read_slice_dataset(p)); };
            const auto report = run_experiment(ev_real.empty() ? std::vector<SegSample>{} : load(ev_real), load(ev_mask),
                                               load(ev_density), load(ev_test), sc, parse_seeds(ev_seeds));
            std::cout << report.to_text();
            if (!ev_json.empty()) lsf::write_file(ev_json, report.to_json() + "\n");
        } else if (*sv) {
            const auto colon = sv_addr.rfind(':');
            int port = -1;
            if (colon != std::string::npos) {
                try {
                    port = std::stoi(sv_addr.substr(colon + 1));
                } catch (const std::logic_error&) {
                }
            }
            if (colon == std::string::npos || port < 0 || port > 65535)
                throw UserError("--addr must be host:port, got '" + sv_addr + "'");
            Service service(sv_cfg);
            httplib::Server server;
            service.mount(server);
            const std::string host = sv_addr.substr(0, colon);
            if (!server.bind_to_port(host, port)) throw UserError("cannot bind " + sv_addr);
            std::cout << "listening on " << sv_addr << std::endl;
            server.listen_after_bind();
        } else if (*dg) {
            std::cout << directory_digest(dg_dir) << "\n";
        } else if (*au) {
            bool ok = true;
            for (auto [name, target] : {std::pair{"generator", AuditTarget::generator},
                                        std::pair{"discriminator", AuditTarget::discriminator},
                                        std::pair{"linear", AuditTarget::linear}}) {
                const auto r = finite_difference_audit(target, au_seed);
                std::cout << "== " << name << "\n" << r.to_text();
                ok = ok && r.max_rel_error < 1e-3;
            }
            return ok ? 0 : 2;
        } else if (*sa) {
            sa_cfg.bridge_mode = bridge_mode_from_string(sa_bridge);
            std::cout << shape_audit(sa_cfg).to_text();
        }
    } catch (const UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const TrainingDivergence& e) {
        std::cerr << "error: training diverged at step " << e.step() << ": " << e.what() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NotFound& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
