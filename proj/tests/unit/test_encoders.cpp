#include "doctest.h"
#include "gradient_cases.hpp"
#include "invariants.hpp"

using namespace muse;

TEST_CASE("encoders return one out_dim vector per sentence")
{
    for (auto arch : {Architecture::transformer, Architecture::cnn, Architecture::dan}) {
        CAPTURE(to_string(arch));
        auto config = EncoderConfig::desk(arch, 50);
        config.out_dim = 24;
        const auto params = init_parameters<float>(config, 1);
        std::mt19937_64 rng(2);
        const auto out = oracle::encode_ids(config, params, {oracle::random_ids(rng, 50, 7), oracle::random_ids(rng, 50, 3)});
        CHECK(out.shape() == Shape{2, 24});
        CHECK(out.all_finite());
    }
}

TEST_CASE("padding does not change an encoding")
{
    for (auto arch : {Architecture::transformer, Architecture::cnn, Architecture::dan}) {
        CAPTURE(to_string(arch));
        auto config = EncoderConfig::desk(arch, 60);
        config.max_len = 24;
        CHECK(oracle::pad_invariance_error(config, 3, 10) < 1e-5);
    }
}

TEST_CASE("bag order does not change a DAN encoding")
{
    CHECK(oracle::dan_order_error(EncoderConfig::desk(Architecture::dan, 80), 4, 20) < 1e-6);
}

TEST_CASE("initialisation and encoding are deterministic")
{
    for (auto arch : {Architecture::transformer, Architecture::cnn, Architecture::dan}) {
        auto config = EncoderConfig::desk(arch, 40);
        config.max_len = 16;
        CHECK(oracle::deterministic(config, 9));
    }
    const auto config = EncoderConfig::desk(Architecture::cnn, 40);
    CHECK_FALSE(init_parameters<float>(config, 1) == init_parameters<float>(config, 2));
}

TEST_CASE("parameter families per architecture")
{
    auto has = [](const std::vector<std::string>& names, const std::string& prefix) {
        return std::any_of(names.begin(), names.end(), [&](const std::string& n) { return n.rfind(prefix, 0) == 0; });
    };
    const auto t = init_parameters<float>(EncoderConfig::desk(Architecture::transformer, 30), 1).names();
    const auto c = init_parameters<float>(EncoderConfig::desk(Architecture::cnn, 30), 1).names();
    const auto d = init_parameters<float>(EncoderConfig::desk(Architecture::dan, 30), 1).names();
    CHECK(has(t, "transformer.layer0.attn.q.w"));
    CHECK(has(t, "embed.positions"));
    CHECK_FALSE(has(t, "cnn."));
    CHECK(has(c, "cnn.layer0.width1.w"));
    CHECK_FALSE(has(c, "embed.positions"));
    CHECK(has(d, "dan."));
    CHECK_FALSE(has(d, "transformer."));
    for (const auto* names : {&t, &c, &d}) {
        for (const char* shared : {"embed.tokens", "context.", "head.qa_question.", "head.qa_response.", "head.nli."}) {
            CAPTURE(shared);
            CHECK(has(*names, shared));
        }
    }
}

TEST_CASE("invalid batches are rejected")
{
    auto config = EncoderConfig::desk(Architecture::transformer, 30);
    config.max_len = 4;
    const auto params = init_parameters<float>(config, 1);
    CHECK_THROWS_AS(oracle::encode_ids(config, params, {{2, 3, 4, 5, 6}}), InvalidArgument);
    CHECK_THROWS_AS(oracle::encode_ids(config, params, {{}}), InvalidArgument);
    CHECK_THROWS_AS(oracle::encode_ids(config, params, {{2, 99}}), InvalidArgument);
}

TEST_CASE("config survives key=value round trip")
{
    for (auto arch : {Architecture::transformer, Architecture::cnn, Architecture::dan}) {
        auto config = EncoderConfig::paper(arch, 1234);
        config.cnn.filter_widths = {1, 4};
        const auto back = EncoderConfig::from_kv(KeyValueConfig::parse(config.to_kv().to_text()));
        CHECK(back.to_kv().to_text() == config.to_kv().to_text());
    }
    const auto paper = EncoderConfig::paper(Architecture::transformer, 10);
    CHECK(paper.transformer.layers == 6);
    CHECK(paper.transformer.heads == 8);
    CHECK(paper.transformer.hidden == 512);
    CHECK(paper.transformer.filter == 2048);
    auto bad = EncoderConfig::desk(Architecture::transformer, 10);
    bad.transformer.heads = 3;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("nli head returns three logits")
{
    const auto config = oracle::tiny_config(Architecture::cnn);
    const auto params = init_parameters<float>(config, 1);
    Graph<float> g(false);
    std::mt19937_64 rng(1);
    const auto a = oracle::encode_ids(config, params, {oracle::random_ids(rng, 11, 3), oracle::random_ids(rng, 11, 2)});
    const Var in[] = {g.constant(a), g.constant(a)};
    CHECK(g.shape(apply_task_head(g, TaskHead::nli, params, in)) == Shape{2, 3});
    const Var one[] = {g.constant(a)};
    CHECK_THROWS_AS(apply_task_head(g, TaskHead::nli, params, one), InvalidArgument);
}
