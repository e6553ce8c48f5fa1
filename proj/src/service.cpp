#include "lesyn/service.hpp"

#include <cmath>
#include <cstdio>

#include <httplib.h>
#include <json.hpp>

#include "lesyn/digest.hpp"
#include "lesyn/implant.hpp"
#include "lesyn/lsf.hpp"
#include "lesyn/png.hpp"
#include "lesyn/synthesis.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace lesyn {

struct Service::Store {
    std::map<std::string, std::shared_ptr<const GeneratorSnapshot>> checkpoints;
    std::map<std::string, Mask> masks;
    std::map<std::string, SliceSample> slices;
};

namespace {

HttpResponse json_response(const json& j, int status = 200) { return {status, "application/json", j.dump(), {}}; }

DensityHistogram histogram_from_json(const json& value, int expected_bins) {
    const json* bins = &value;
    if (value.is_object()) {
        if (!value.contains("bins")) throw ApiError(400, "bad_histogram", "histogram object needs a 'bins' array");
        bins = &value["bins"];
    }
    if (!bins->is_array()) throw ApiError(400, "bad_histogram", "histogram bins must be an array");
    if (static_cast<int>(bins->size()) != expected_bins)
        throw ApiError(400, "bad_histogram_length",
                       "histogram has " + std::to_string(bins->size()) + " bins, expected " + std::to_string(expected_bins));
    std::vector<double> v;
    double sum = 0;
    for (const auto& b : *bins) {
        if (!b.is_number()) throw ApiError(400, "bad_histogram", "histogram bins must be numbers");
        const double x = b.get<double>();
        if (!std::isfinite(x)) throw ApiError(400, "bad_histogram", "histogram bins must be finite");
        if (x < 0) throw ApiError(400, "bad_histogram_negative", "histogram bins must be non-negative");
        v.push_back(x);
        sum += x;
    }
    if (std::abs(sum - 1.0) > kApiHistogramTolerance)
        throw ApiError(400, "bad_histogram_sum", "histogram sums to " + std::to_string(sum) + ", expected 1 +/- 1e-4");
    for (auto& x : v) x /= sum;
    return DensityHistogram(std::move(v), kApiHistogramTolerance);
}

json parse_body(const std::string& body) {
    try {
        auto j = json::parse(body);
        if (!j.is_object()) throw ApiError(400, "bad_request", "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw ApiError(400, "bad_json", e.what());
    }
}

std::string require_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw ApiError(400, "bad_request", std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

template <typename T>
T optional_number(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ApiError(400, "bad_request", std::string("field '") + key + "' must be a number");
    return j[key].get<T>();
}

Mask decode_mask_png(const std::string& b64, int size) {
    Grid<std::uint8_t> g;
    try {
        g = png::decode_gray(base64_decode(b64));
    } catch (const std::exception& e) {
        throw ApiError(400, "bad_mask", std::string("mask_png is not a decodable PNG: ") + e.what());
    }
    if (g.rows() != size || g.cols() != size)
        throw ApiError(400, "bad_mask", "mask must be " + std::to_string(size) + "x" + std::to_string(size));
    Mask m(size, size);
    for (std::size_t i = 0; i < g.size(); ++i) m.storage()[i] = g.storage()[i] >= 128 ? 1 : 0;
    return m;
}

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

template <typename F>
HttpResponse guarded(F&& f) {
    try {
        return f();
    } catch (const ApiError& e) {
        return error_response(e.status(), e.code(), e.what());
    } catch (const PlacementError& e) {
        auto r = error_response(409, "placement_infeasible", e.what());
        auto j = json::parse(r.body);
        j["attempts"] = e.attempts();
        r.body = j.dump();
        return r;
    } catch (const TransformError& e) {
        return error_response(409, "placement_infeasible", e.what());
    } catch (const InvalidArgument& e) {
        return error_response(400, "bad_request", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal", e.what());
    }
}

}  // namespace

HttpResponse error_response(int status, const std::string& code, const std::string& message) {
    return json_response(json{{"code", code}, {"message", message}}, status);
}

DensityHistogram parse_api_histogram(const std::string& json_text, int expected_bins) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ApiError(400, "bad_json", e.what());
    }
    return histogram_from_json(j, expected_bins);
}

Service::Service(ServiceConfig config) : config_(std::move(config)) { reload(); }

void Service::reload() {
    auto store = std::make_shared<Store>();
    if (!config_.checkpoints.empty()) {
        if (!fs::is_directory(config_.checkpoints))
            throw NotFound("checkpoint directory not found: " + config_.checkpoints.string());
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(config_.checkpoints))
            if (e.is_directory() && is_checkpoint(e.path())) dirs.push_back(e.path());
        for (const auto& d : dirs)
            store->checkpoints.emplace(d.filename().string(), std::make_shared<const GeneratorSnapshot>(load_generator(d)));
    }
    if (!config_.shapes.empty())
        for (const auto& d : list_samples(config_.shapes))
            store->masks.emplace(d.filename().string(), lsf::read_mask(d / "mask.lsf"));
    if (!config_.slices.empty())
        for (const auto& d : list_samples(config_.slices)) store->slices.emplace(d.filename().string(), read_slice_sample(d));
    std::lock_guard lock(mutex_);
    store_ = std::move(store);
}

std::shared_ptr<const Service::Store> Service::snapshot() const {
    std::lock_guard lock(mutex_);
    return store_;
}

HttpResponse Service::health() const {
    const auto s = snapshot();
    return json_response(json{{"status", "ok"},
                              {"checkpoints", s->checkpoints.size()},
                              {"masks", s->masks.size()},
                              {"slices", s->slices.size()}});
}

HttpResponse Service::list_checkpoints() const {
    const auto s = snapshot();
    json out = json::array();
    for (const auto& [id, snap] : s->checkpoints)
        out.push_back({{"id", id},
                       {"config", summarize(snap->params.config)},
                       {"mode", to_string(snap->mode)},
                       {"patch_size", snap->params.config.patch_size},
                       {"hist_bins", snap->params.config.hist_bins},
                       {"step", snap->step},
                       {"digest", snap->digest}});
    return json_response(out);
}

HttpResponse Service::list_masks() const {
    const auto s = snapshot();
    json out = json::array();
    for (const auto& [id, mask] : s->masks)
        out.push_back({{"id", id},
                       {"size", mask.rows()},
                       {"foreground", mask.foreground_count()},
                       {"thumbnail_png", base64_encode(png::encode_gray(mask.to_float()))}});
    return json_response(out);
}

HttpResponse Service::mask_png(const std::string& id) const {
    return guarded([&] {
        const auto s = snapshot();
        const auto it = s->masks.find(id);
        if (it == s->masks.end()) throw ApiError(404, "unknown_mask", "no mask '" + id + "'");
        return HttpResponse{200, "image/png", png::encode_gray(it->second.to_float()), {}};
    });
}

HttpResponse Service::synthesize(const std::string& body, const std::string& accept) const {
    return guarded([&] {
        const auto s = snapshot();
        const json req = parse_body(body);
        const std::string ckpt_id = require_string(req, "checkpoint_id");
        const auto ck = s->checkpoints.find(ckpt_id);
        if (ck == s->checkpoints.end()) throw ApiError(404, "unknown_checkpoint", "no checkpoint '" + ckpt_id + "'");
        const auto& model = *ck->second;
        const int ps = model.params.config.patch_size;

        Mask mask;
        if (req.contains("mask_png")) {
            if (!req["mask_png"].is_string()) throw ApiError(400, "bad_mask", "mask_png must be a base64 string");
            mask = decode_mask_png(req["mask_png"].get<std::string>(), ps);
        } else {
            const std::string mask_id = require_string(req, "mask_id");
            const auto m = s->masks.find(mask_id);
            if (m == s->masks.end()) throw ApiError(404, "unknown_mask", "no mask '" + mask_id + "'");
            mask = m->second;
            if (mask.rows() != ps) throw ApiError(400, "bad_mask", "mask size differs from the checkpoint patch size");
        }
        if (!req.contains("histogram")) throw ApiError(400, "bad_histogram", "missing histogram");
        const auto hist = histogram_from_json(req["histogram"], model.params.config.hist_bins);

        const FloatGrid patch = lesyn::synthesize(model, {mask, hist});
        HttpResponse r;
        r.headers["X-Histogram-L1"] =
            mask.any() ? fmt6(histogram_l1(hist, compute_histogram(patch, mask, model.params.config.hist_bins))) : "nan";
        r.headers["X-Checkpoint-Digest"] = model.digest;
        if (accept.find("application/x-lsf") != std::string::npos) {
            r.content_type = "application/x-lsf";
            r.body = lsf::encode_grid(patch);
        } else {
            r.content_type = "image/png";
            r.body = png::encode_gray(patch);
        }
        return r;
    });
}

HttpResponse Service::implant_preview(const std::string& body) const {
    return guarded([&] {
        const auto s = snapshot();
        const json req = parse_body(body);
        const std::string slice_id = require_string(req, "slice_id");
        const auto sl = s->slices.find(slice_id);
        if (sl == s->slices.end()) throw ApiError(404, "unknown_slice", "no slice '" + slice_id + "'");
        const std::string ckpt_id = require_string(req, "checkpoint_id");
        const auto ck = s->checkpoints.find(ckpt_id);
        if (ck == s->checkpoints.end()) throw ApiError(404, "unknown_checkpoint", "no checkpoint '" + ckpt_id + "'");
        const std::string mask_id = require_string(req, "mask_id");
        const auto m = s->masks.find(mask_id);
        if (m == s->masks.end()) throw ApiError(404, "unknown_mask", "no mask '" + mask_id + "'");
        if (!req.contains("histogram")) throw ApiError(400, "bad_histogram", "missing histogram");
        const auto& model = *ck->second;
        const auto hist = histogram_from_json(req["histogram"], model.params.config.hist_bins);
        if (!m->second.any()) throw ApiError(400, "bad_mask", "mask is empty");

        ImplantSpec spec;
        const json js = req.contains("spec") ? req["spec"] : json::object();
        if (!js.is_object()) throw ApiError(400, "bad_request", "spec must be an object");
        spec.rotation_deg = optional_number(js, "rotation", 0.0);
        spec.scale = optional_number(js, "scale", 1.0);
        spec.seed = optional_number<std::uint64_t>(js, "seed", 0);
        spec.feather_sigma = optional_number(js, "feather_sigma", 2.0);
        spec.max_retries = optional_number(js, "max_retries", 50);

        const auto& base = sl->second;
        FloatGrid lesion = lesyn::synthesize(model, {m->second, hist});
        for (auto& v : lesion.storage()) v = static_cast<float>(base.window.from_unit(v));
        const auto result = place_lesion(base.slice, base.liver, lesion, m->second, spec);
        return json_response(json{{"slice_png", base64_encode(png::encode_gray(normalize_hu(result.slice, base.window)))},
                                  {"mask_png", base64_encode(png::encode_gray(result.lesion_mask.to_float()))},
                                  {"applied",
                                   {{"rotation", result.applied.rotation_deg},
                                    {"scale", result.applied.scale},
                                    {"row_offset", result.applied.row_offset},
                                    {"col_offset", result.applied.col_offset},
                                    {"attempts", result.applied.attempts}}}});
    });
}

void Service::mount(httplib::Server& server) const {
    auto send = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        for (const auto& [k, v] : r.headers) res.set_header(k, v);
        res.set_content(r.body, r.content_type);
    };
    server.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server.Get("/checkpoints",
               [this, send](const httplib::Request&, httplib::Response& res) { send(res, list_checkpoints()); });
    server.Get("/masks", [this, send](const httplib::Request&, httplib::Response& res) { send(res, list_masks()); });
    server.Get(R"(/masks/([^/]+)\.png)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, mask_png(req.matches[1]));
    });
    server.Post("/synthesize", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, synthesize(req.body, req.get_header_value("Accept")));
    });
    server.Post("/implant/preview", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, implant_preview(req.body));
    });
}

}  // namespace lesyn
