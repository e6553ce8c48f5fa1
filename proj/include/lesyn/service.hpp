#pragma once

// HTTP facade over a read-only checkpoint store, shape pool and healthy-slice pool.
// Handlers are plain functions of the request so they can be exercised without sockets.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "lesyn/checkpoint.hpp"
#include "lesyn/dataset.hpp"

namespace httplib {
class Server;
}

namespace lesyn {

struct ServiceConfig {
    std::filesystem::path checkpoints;  // directory of checkpoint directories
    std::filesystem::path shapes;       // lesion-sample dataset; mask ids are sample names
    std::filesystem::path slices;       // optional slice dataset for implant previews
};

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;
};

inline constexpr double kApiHistogramTolerance = 1e-4;

class Service {
public:
    explicit Service(ServiceConfig config);

    HttpResponse health() const;
    HttpResponse list_checkpoints() const;
    HttpResponse list_masks() const;
    HttpResponse mask_png(const std::string& id) const;
    /// `accept` of "application/x-lsf" returns LSF1 instead of PNG.
    HttpResponse synthesize(const std::string& body, const std::string& accept = "") const;
    HttpResponse implant_preview(const std::string& body) const;

    /// Rescans the directories and swaps the snapshot atomically.
    void reload();
    void mount(httplib::Server& server) const;

    struct Store;

private:
    std::shared_ptr<const Store> snapshot() const;

    ServiceConfig config_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Store> store_;
};

HttpResponse error_response(int status, const std::string& code, const std::string& message);

/// Validates an ApiHistogram JSON value ({"bins": [...]} or a bare array) and renormalizes it.
/// Throws ApiError carrying the error code.
DensityHistogram parse_api_histogram(const std::string& json_text, int expected_bins);

class ApiError : public std::runtime_error {
public:
    ApiError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code)) {}
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

}  // namespace lesyn
