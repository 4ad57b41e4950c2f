#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "muse/checkpoint.hpp"
#include "muse/embedding.hpp"
#include "muse/model_io.hpp"
#include "muse/text_io.hpp"
#include "gradient_cases.hpp"

using namespace muse;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / "muse_unit_io";
    fs::create_directories(dir);
    return dir / name;
}

std::string bytes(const Checkpoint& c)
{
    std::ostringstream out;
    write_checkpoint(out, c);
    return out.str();
}

}  // namespace

TEST_CASE("checkpoint save, load, save is byte-identical")
{
    for (auto arch : {Architecture::transformer, Architecture::cnn, Architecture::dan}) {
        const auto model = make_model<float>(oracle::tiny_config(arch), 7);
        KeyValueConfig extra;
        extra.set("steps", "12");
        const auto path = scratch("model.ckpt").string();
        save_model(path, model, extra);
        const auto loaded = load_model(path);
        CHECK(loaded.params == model.params);
        CHECK(loaded.config.to_kv().to_text() == model.config.to_kv().to_text());
        const auto first = io::read_file(path);
        save_model(path, loaded, extra);
        CHECK(io::read_file(path) == first);
        CHECK(KeyValueConfig::parse(load_checkpoint(path).config_text).get("steps") == "12");
    }
}

TEST_CASE("checkpoint corruption and mismatches are data errors")
{
    const auto model = make_model<float>(oracle::tiny_config(Architecture::cnn), 1);
    const auto good = bytes(to_checkpoint(model));
    std::istringstream truncated(good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(read_checkpoint(truncated), DataError);
    std::istringstream magic("NOTACKPT" + good.substr(8));
    CHECK_THROWS_AS(read_checkpoint(magic), DataError);

    auto ckpt = to_checkpoint(model);
    ckpt.config_text += "embed_dim=7\n";
    CHECK_THROWS_AS(from_checkpoint(ckpt), DataError);
    ckpt = to_checkpoint(model);
    ckpt.params.add("stray", Tensor<float>({1}));
    CHECK_THROWS_AS(from_checkpoint(ckpt), DataError);
    CHECK_THROWS_AS(load_model(scratch("absent.ckpt").string()), DataError);
}

TEST_CASE("encoder config key-value round trip")
{
    for (auto arch : {Architecture::transformer, Architecture::cnn, Architecture::dan}) {
        const auto config = EncoderConfig::paper(arch, 32000);
        CHECK(EncoderConfig::from_kv(config.to_kv()).to_kv().to_text() == config.to_kv().to_text());
    }
    auto kv = EncoderConfig::desk(Architecture::cnn, 100).to_kv();
    kv.set("embed_dim", "many");
    CHECK_THROWS(EncoderConfig::from_kv(kv));
    CHECK(KeyValueConfig::parse("# note\na=1\n\na=2\n").get("a") == "2");
    CHECK_THROWS_AS(KeyValueConfig::parse("a=1\nno equals\n", "cfg"), DataError);
}

TEST_CASE("embedding text round trip")
{
    EmbeddingTable table{{"x", "y"}, Tensor<float>({2, 3}, {0.1f, -2.5f, 1e-7f, 3.14159f, 0, 123456.7f})};
    const auto text = embeddings_to_text(table);
    const auto back = embeddings_from_text(text);
    CHECK(back.ids == table.ids);
    CHECK(back.vectors == table.vectors);
    CHECK(embeddings_to_text(back) == text);
    CHECK(embeddings_from_text("").ids.empty());

    try {
        embeddings_from_text("a\t1,2\nb\t1\n", "emb.tsv");
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(embeddings_from_text("a\t1,2\na\t3,4\n"), DataError);
    CHECK_THROWS_AS(embeddings_from_text("a\t1,zz\n"), DataError);
}

TEST_CASE("tab-separated readers report the failing line")
{
    const auto path = scratch("pairs.tsv").string();
    io::write_file(path, "a\tb\nc\td\ne\n");
    try {
        io::read_pairs(path);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("pairs.tsv:3") != std::string::npos);
    }
    io::write_file(path, "q1\tfirst\nq1\tagain\n");
    CHECK_THROWS_AS(io::read_id_text(path), DataError);
    io::write_file(path, "4.5\tA cat.\tA dog.\r\n\nx\ta\tb\n");
    CHECK_THROWS_AS(io::read_sts(path), DataError);
    io::write_file(path, "4.5\tA cat.\tA dog.\r\n");
    const auto sts = io::read_sts(path);
    REQUIRE(sts.size() == 1);
    CHECK(sts[0].b == "A dog.");
    CHECK_THROWS_AS(io::read_lines(scratch("none.txt").string()), DataError);
}

TEST_CASE("results and metrics files")
{
    std::map<std::string, ResultList> results{{"q2", {{"c1", 0.5, 1}}}, {"q1", {{"c3", 1.25, 1}, {"c2", -0.1, 2}}}};
    CHECK(io::results_to_tsv(results) == "q1\t1\tc3\t1.25\nq1\t2\tc2\t-0.1\nq2\t1\tc1\t0.5\n");
    const auto json = nlohmann::json::parse(io::metrics_to_json({{"bitext", "p@1", 0.75, 200}}));
    REQUIRE(json.is_array());
    CHECK(json[0]["task"] == "bitext");
    CHECK(json[0]["metric"] == "p@1");
    CHECK(json[0]["value"] == 0.75);
    CHECK(json[0]["n_queries"] == 200);
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17}) CHECK(std::stod(io::format_real(v)) == v);
}
