#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <thread>

#include "lesyn/checkpoint.hpp"
#include "lesyn/digest.hpp"
#include "lesyn/lsf.hpp"
#include "lesyn/phantom.hpp"
#include "lesyn/png.hpp"
#include "lesyn/service.hpp"
#include "support/fixtures.hpp"

using namespace lesyn;
namespace fx = lesyn::testing;
using nlohmann::json;

namespace {

struct Fixture {
    fx::TempDir root{"svc"};
    std::unique_ptr<Service> service;

    Fixture() {
        auto state = train_init(fx::small_generator(), fx::small_discriminator(), 12);
        TrainConfig c;
        save_checkpoint(root.path / "ckpts" / "alpha", state, c);
        std::filesystem::create_directories(root.path / "ckpts" / "not_a_checkpoint");

        const auto lesions = fx::phantom_lesions(16, 2, 4, 64);
        for (std::size_t i = 0; i < 3; ++i)
            write_lesion_record(root.path / "shapes" / sample_dir_name(i), lesions.at(i), HuWindow{0, 1});

        PhantomConfig cfg;
        cfg.rows = cfg.cols = 64;
        cfg.min_lesions = cfg.max_lesions = 0;
        const auto ph = generate_phantom(77, cfg);
        write_slice_sample(root.path / "slices" / sample_dir_name(0), {ph.slice, ph.liver, {}, HuWindow{0, 1}});

        service = std::make_unique<Service>(ServiceConfig{root.path / "ckpts", root.path / "shapes", root.path / "slices"});
    }

    std::string mask_id(std::size_t i) const { return sample_dir_name(i); }
};

json delta_bins(int bin, int n = 100) {
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    v[static_cast<std::size_t>(bin)] = 1.0;
    return v;
}

std::string synth_body(const json& bins, const std::string& mask_id = sample_dir_name(0), const std::string& ckpt = "alpha") {
    return json{{"checkpoint_id", ckpt}, {"mask_id", mask_id}, {"histogram", {{"bins", bins}}}}.dump();
}

std::string code_of(const HttpResponse& r) { return json::parse(r.body).at("code").get<std::string>(); }

}  // namespace

TEST_CASE("health and listings") {
    Fixture f;
    const auto h = json::parse(f.service->health().body);
    CHECK(h["status"] == "ok");
    CHECK(h["checkpoints"] == 1);
    CHECK(h["masks"] == 3);

    const auto ck = f.service->list_checkpoints();
    CHECK(ck.status == 200);
    const auto list = json::parse(ck.body);
    REQUIRE(list.size() == 1);
    CHECK(list[0]["id"] == "alpha");
    CHECK(list[0]["digest"] == directory_digest(f.root.path / "ckpts" / "alpha"));
    CHECK(list[0]["patch_size"] == 16);

    // a fresh service over the same store reports the same digest
    Service again(ServiceConfig{f.root.path / "ckpts", f.root.path / "shapes", {}});
    CHECK(json::parse(again.list_checkpoints().body) == list);

    const auto masks = json::parse(f.service->list_masks().body);
    REQUIRE(masks.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(masks[i]["id"] == f.mask_id(i));
        const auto png_bytes = base64_decode(masks[i]["thumbnail_png"].get<std::string>());
        const auto img = png::decode_gray(png_bytes);
        const auto stored = lsf::read_mask(f.root.path / "shapes" / f.mask_id(i) / "mask.lsf");
        CHECK(img.rows() == stored.rows());
        for (int r = 0; r < img.rows(); ++r)
            for (int c = 0; c < img.cols(); ++c) CHECK((img(r, c) == 255) == (stored(r, c) == 1));
    }
    const auto one = f.service->mask_png(f.mask_id(1));
    CHECK(one.status == 200);
    CHECK(one.content_type == "image/png");
    CHECK(f.service->mask_png("nope").status == 404);
}

TEST_CASE("an empty store lists nothing") {
    fx::TempDir empty("svc_empty");
    Service s(ServiceConfig{empty.path, {}, {}});
    CHECK(s.list_checkpoints().body == "[]");
    CHECK(s.list_masks().body == "[]");
    CHECK_THROWS_AS(Service(ServiceConfig{empty.path / "missing", {}, {}}), NotFound);
}

TEST_CASE("synthesize returns deterministic PNGs with the round-trip header") {
    Fixture f;
    const auto body = synth_body(delta_bins(60));
    const auto a = f.service->synthesize(body);
    const auto b = f.service->synthesize(body);
    REQUIRE(a.status == 200);
    CHECK(a.content_type == "image/png");
    CHECK(a.body == b.body);
    const auto img = png::decode_gray(a.body);
    CHECK(img.rows() == 16);
    REQUIRE(a.headers.contains("X-Histogram-L1"));
    const double l1 = std::stod(a.headers.at("X-Histogram-L1"));
    CHECK(l1 >= 0.0);
    CHECK(l1 <= 2.0);
    CHECK(a.headers.at("X-Checkpoint-Digest") == directory_digest(f.root.path / "ckpts" / "alpha"));

    // the header equals the L1 between the request and the recomputed histogram of the LSF output
    const auto lsf_resp = f.service->synthesize(body, "application/x-lsf");
    CHECK(lsf_resp.content_type == "application/x-lsf");
    const auto patch = lsf::decode_grid(lsf_resp.body);
    const auto mask = lsf::read_mask(f.root.path / "shapes" / f.mask_id(0) / "mask.lsf");
    CHECK(l1 == doctest::Approx(histogram_l1(DensityHistogram::delta(60), compute_histogram(patch, mask))).epsilon(1e-5));
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) CHECK(img(r, c) == png::to_byte(patch(r, c)));
}

TEST_CASE("synthesize accepts an inline mask") {
    Fixture f;
    const auto mask = lsf::read_mask(f.root.path / "shapes" / f.mask_id(2) / "mask.lsf");
    json req{{"checkpoint_id", "alpha"},
             {"mask_png", base64_encode(png::encode_gray(mask.to_float()))},
             {"histogram", delta_bins(30)}};
    const auto inline_resp = f.service->synthesize(req.dump());
    CHECK(inline_resp.status == 200);
    CHECK(inline_resp.body == f.service->synthesize(synth_body(delta_bins(30), f.mask_id(2))).body);

    req["mask_png"] = base64_encode(png::encode_gray(FloatGrid(8, 8, 1.0f)));
    CHECK(code_of(f.service->synthesize(req.dump())) == "bad_mask");
    req["mask_png"] = base64_encode("garbage");
    CHECK(code_of(f.service->synthesize(req.dump())) == "bad_mask");
}

TEST_CASE("synthesize error codes") {
    Fixture f;
    auto check = [&](const std::string& body, int status, const std::string& code) {
        const auto r = f.service->synthesize(body);
        CHECK(r.status == status);
        CHECK(code_of(r) == code);
        CHECK(json::parse(r.body).contains("message"));
    };
    std::vector<double> short_bins(99, 1.0 / 99);
    check(synth_body(short_bins), 400, "bad_histogram_length");
    auto neg = delta_bins(5);
    neg[6] = -0.1;
    neg[5] = 1.1;
    check(synth_body(neg), 400, "bad_histogram_negative");
    check(synth_body(delta_bins(5), sample_dir_name(0), "missing"), 404, "unknown_checkpoint");
    check(synth_body(delta_bins(5), "nope"), 404, "unknown_mask");
    check("{not json", 400, "bad_json");
    check(json{{"mask_id", sample_dir_name(0)}, {"histogram", delta_bins(1)}}.dump(), 400, "bad_request");
    check(json{{"checkpoint_id", "alpha"}, {"mask_id", sample_dir_name(0)}}.dump(), 400, "bad_histogram");
    json strings = delta_bins(1);
    strings[0] = "x";
    check(synth_body(strings), 400, "bad_histogram");
}

TEST_CASE("histogram sum tolerance boundary") {
    for (double excess : {0.0, 5e-5, -5e-5, 9.9e-5, -9.9e-5}) {
        std::vector<double> v(100, 0.0);
        v[10] = 0.5;
        v[20] = 0.5 + excess;
        const auto h = parse_api_histogram(json{{"bins", v}}.dump(), 100);
        double sum = 0;
        for (double b : h.bins()) sum += b;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (double excess : {1.01e-4, -1.01e-4, 1e-3, 0.5}) {
        std::vector<double> v(100, 0.0);
        v[10] = 0.5;
        v[20] = 0.5 + excess;
        try {
            parse_api_histogram(json{{"bins", v}}.dump(), 100);
            FAIL("accepted sum off by " << excess);
        } catch (const ApiError& e) {
            CHECK(e.code() == "bad_histogram_sum");
            CHECK(e.status() == 400);
        }
    }
    CHECK(parse_api_histogram(json(delta_bins(3)).dump(), 100) == DensityHistogram::delta(3));
}

TEST_CASE("implant preview") {
    Fixture f;
    json req{{"slice_id", sample_dir_name(0)},
             {"checkpoint_id", "alpha"},
             {"mask_id", f.mask_id(0)},
             {"histogram", delta_bins(70)},
             {"spec", {{"rotation", 25.0}, {"scale", 1.1}, {"seed", 9}}}};
    const auto a = f.service->implant_preview(req.dump());
    REQUIRE(a.status == 200);
    CHECK(a.body == f.service->implant_preview(req.dump()).body);
    const auto j = json::parse(a.body);
    const auto mask = png::decode_gray(base64_decode(j["mask_png"].get<std::string>()));
    const auto slice = png::decode_gray(base64_decode(j["slice_png"].get<std::string>()));
    CHECK(slice.rows() == 64);
    const auto liver = read_slice_sample(f.root.path / "slices" / sample_dir_name(0)).liver;
    std::size_t fg = 0;
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c)
            if (mask(r, c)) {
                ++fg;
                CHECK(liver(r, c) == 1);
            }
    CHECK(fg > 0);
    CHECK(j["applied"]["rotation"] == 25.0);

    auto huge = req;
    huge["spec"]["scale"] = 40.0;
    CHECK(f.service->implant_preview(huge.dump()).status == 409);
    auto crowded = req;
    crowded["spec"]["scale"] = 1.5;
    crowded["spec"]["max_retries"] = 3;
    {
        // a one-pixel liver leaves no room
        auto tiny = read_slice_sample(f.root.path / "slices" / sample_dir_name(0));
        tiny.liver = Mask(64, 64);
        tiny.liver(30, 30) = 1;
        write_slice_sample(f.root.path / "slices" / sample_dir_name(1), tiny);
        f.service->reload();
        crowded["slice_id"] = sample_dir_name(1);
        const auto r = f.service->implant_preview(crowded.dump());
        CHECK(r.status == 409);
        CHECK(code_of(r) == "placement_infeasible");
        CHECK(json::parse(r.body)["attempts"] == 3);
    }
    auto missing = req;
    missing["slice_id"] = "nope";
    CHECK(code_of(f.service->implant_preview(missing.dump())) == "unknown_slice");
}

TEST_CASE("endpoints answer over a real socket") {
    Fixture f;
    httplib::Server server;
    f.service->mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    const auto health = client.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(json::parse(health->body)["status"] == "ok");
    const auto ck = client.Get("/checkpoints");
    REQUIRE(ck);
    CHECK(json::parse(ck->body)[0]["id"] == "alpha");
    const auto png_resp = client.Get("/masks/" + sample_dir_name(1) + ".png");
    REQUIRE(png_resp);
    CHECK(png_resp->get_header_value("Content-Type") == "image/png");
    const auto syn = client.Post("/synthesize", synth_body(delta_bins(40)), "application/json");
    REQUIRE(syn);
    CHECK(syn->status == 200);
    CHECK(syn->body == f.service->synthesize(synth_body(delta_bins(40))).body);
    CHECK(syn->has_header("X-Histogram-L1"));
    const auto bad = client.Post("/synthesize", synth_body(std::vector<double>(99, 1.0 / 99)), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body)["code"] == "bad_histogram_length");
    server.stop();
    t.join();
}
