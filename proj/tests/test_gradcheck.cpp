#include <doctest.h>

#include "lesyn/gradcheck.hpp"

using namespace lesyn;

TEST_CASE("linear toy layer is exact up to rounding") {
    auto r = finite_difference_audit(AuditTarget::linear, 3);
    CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("tiny generator gradients, compressed bridge") {
    for (std::uint64_t seed : {1u, 2u}) {
        auto r = audit_generator(tiny_generator_config(BridgeMode::compressed), seed);
        INFO(r.to_text());
        CHECK(r.max_rel_error < 1e-3);
        CHECK(r.covers("hist.dense.weight"));
        CHECK(r.covers("bridge.dense.weight"));
        CHECK(r.covers("fusion.dense.weight"));
        CHECK(r.covers("bridge.reduce.weight"));
        CHECK(r.covers("enc2.bn.scale"));
    }
}

TEST_CASE("tiny generator gradients, literal bridge") {
    auto r = audit_generator(tiny_generator_config(BridgeMode::literal), 5);
    INFO(r.to_text());
    CHECK(r.max_rel_error < 1e-3);
    CHECK_FALSE(r.covers("bridge.reduce.weight"));
}

TEST_CASE("tiny discriminator gradients, including the image input") {
    auto r = finite_difference_audit(AuditTarget::discriminator, 4);
    INFO(r.to_text());
    CHECK(r.max_rel_error < 1e-3);
    CHECK(r.covers("input.image"));
    CHECK(r.covers("head.conv.weight"));
}

TEST_CASE("histogram-conditioned discriminator gradients") {
    auto cfg = tiny_discriminator_config();
    cfg.condition_on_histogram = true;
    auto r = audit_discriminator(cfg, 6);
    INFO(r.to_text());
    CHECK(r.max_rel_error < 1e-3);
}
