#include <cmath>
#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "muse/bench.hpp"
#include "muse/taskgen.hpp"
#include "muse/text_io.hpp"

using namespace muse;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args)
{
    args.insert(args.begin(), "muse");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = muse::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string fresh_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / "muse_unit_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

/// Toy bitext corpus, vocabulary and a briefly trained CNN checkpoint.
std::string toy_pipeline(const std::string& name)
{
    const auto dir = fresh_dir(name);
    REQUIRE(invoke({"gen-toy", "bitext", "--output-dir", dir, "--count", "150", "--seed", "3"}).code == 0);
    REQUIRE(invoke({"train-vocab", "--corpus", dir + "/corpus.txt", "--output", dir + "/vocab.txt", "--size", "200", "--coverage", "1"}).code == 0);
    REQUIRE(invoke({"train", "--data", dir + "/train.jsonl", "--vocab", dir + "/vocab.txt", "--output", dir + "/model.ckpt",
                 "--set", "arch=cnn", "--set", "steps=20", "--set", "batch_size=8"})
                .code == 0);
    return dir;
}

std::map<std::string, ResultList> read_results(const std::string& path)
{
    std::map<std::string, ResultList> out;
    for (const auto& row : io::read_tsv(path, 4)) out[row[0]].push_back({row[2], std::stod(row[3]), std::stoul(row[1])});
    return out;
}

}  // namespace

TEST_CASE("usage errors exit with 1")
{
    CHECK(invoke({}).code == muse::cli::usage);
    CHECK(invoke({"no-such-command"}).code == muse::cli::usage);
    CHECK(invoke({"train-vocab", "--output", "x"}).code == muse::cli::usage);
    CHECK(invoke({"train-vocab", "--corpus", "/nonexistent/file", "--output", "x"}).code == muse::cli::usage);
    CHECK(invoke({"--help"}).code == muse::cli::ok);
}

TEST_CASE("malformed data exits with 2 and names the line")
{
    const auto dir = fresh_dir("bad");
    io::write_file(dir + "/corpus.txt", "abc\n");
    REQUIRE(invoke({"train-vocab", "--corpus", dir + "/corpus.txt", "--output", dir + "/vocab.txt", "--size", "10", "--coverage", "1"}).code == 0);
    io::write_file(dir + "/bad.jsonl", "{\"task\":\"translation\",\"source\":\"a\",\"target\":\"b\"}\n{\"task\":\"poetry\"}\n");
    const auto r = invoke({"train", "--data", dir + "/bad.jsonl", "--vocab", dir + "/vocab.txt", "--output", dir + "/m.ckpt"});
    CHECK(r.code == muse::cli::data_error);
    CHECK(r.err.find("bad.jsonl:2") != std::string::npos);
    io::write_file(dir + "/bad.emb", "a\t1,2\nb\t1,x\n");
    CHECK(invoke({"index", "--embeddings", dir + "/bad.emb", "--output", dir + "/i"}).code == muse::cli::data_error);
}

TEST_CASE("toy pipeline is deterministic and its metrics match the library")
{
    std::string metrics[2], results[2], ckpt[2];
    for (int run = 0; run < 2; ++run) {
        const auto dir = toy_pipeline("run" + std::to_string(run));
        const auto r = invoke({"eval-bitext", "--parallel", dir + "/heldout.tsv", "--checkpoint", dir + "/model.ckpt", "--vocab",
                            dir + "/vocab.txt", "--metrics", dir + "/metrics.json", "--results", dir + "/results.tsv",
                            "--save-task", dir + "/task.json"});
        REQUIRE(r.code == 0);
        metrics[run] = io::read_file(dir + "/metrics.json");
        results[run] = io::read_file(dir + "/results.tsv");
        ckpt[run] = io::read_file(dir + "/model.ckpt");

        const auto task = load_task(dir + "/task.json");
        const auto by_query = read_results(dir + "/results.tsv");
        std::vector<ResultList> lists;
        std::vector<RelevanceSet> rel;
        for (const auto& q : task.queries) {
            lists.push_back(by_query.count(q.id) ? by_query.at(q.id) : ResultList{});
            rel.push_back(task.relevance.at(q.id));
        }
        const auto json = nlohmann::json::parse(metrics[run]);
        CHECK(json[0]["metric"] == "p@1");
        CHECK(json[0]["n_queries"] == task.queries.size());
        CHECK(json[0]["value"].get<double>() == doctest::Approx(precision_at_1(lists, rel)).epsilon(1e-12));
    }
    CHECK(metrics[0] == metrics[1]);
    CHECK(results[0] == results[1]);
    CHECK(ckpt[0] == ckpt[1]);
}

TEST_CASE("encode, index and search")
{
    const auto dir = toy_pipeline("search");
    io::write_file(dir + "/empty.tsv", "");
    REQUIRE(invoke({"encode", "--checkpoint", dir + "/model.ckpt", "--vocab", dir + "/vocab.txt", "--input", dir + "/empty.tsv",
                 "--output", dir + "/empty.emb"})
                .code == 0);
    CHECK(fs::exists(dir + "/empty.emb"));
    CHECK(io::read_file(dir + "/empty.emb").empty());

    std::string texts;
    const auto pairs = io::read_pairs(dir + "/heldout.tsv");
    for (std::size_t i = 0; i < pairs.size(); ++i) texts += "t" + std::to_string(i) + '\t' + pairs[i].second + '\n';
    io::write_file(dir + "/texts.tsv", texts);
    for (const char* threads : {"1", "3"}) {
        REQUIRE(invoke({"encode", "--checkpoint", dir + "/model.ckpt", "--vocab", dir + "/vocab.txt", "--input", dir + "/texts.tsv",
                     "--output", dir + "/t" + threads + ".emb", "--threads", threads})
                    .code == 0);
    }
    CHECK(io::read_file(dir + "/t1.emb") == io::read_file(dir + "/t3.emb"));
    REQUIRE(invoke({"index", "--embeddings", dir + "/t1.emb", "--output", dir + "/t.idx"}).code == 0);
    REQUIRE(invoke({"search", "--index", dir + "/t.idx", "--query-embeddings", dir + "/t1.emb", "--output", dir + "/self.tsv", "-k", "1",
                 "--metric", "angular"})
                .code == 0);
    // Every text finds itself under the angular metric.
    for (const auto& [q, list] : read_results(dir + "/self.tsv")) CHECK(list.front().id == q);
}

TEST_CASE("untrained model on the mini-SQuAD fixture scores near chance")
{
    const auto dir = fresh_dir("reqa");
    const std::string squad = std::string(MUSE_FIXTURE_DIR) + "/mini_squad.json";
    const auto manifest = nlohmann::json::parse(io::read_file(std::string(MUSE_FIXTURE_DIR) + "/mini_squad_manifest.json"));
    std::string corpus;
    for (const auto& doc : load_squad(squad)) {
        for (const auto& p : doc.paragraphs) {
            corpus += p.context + '\n';
            for (const auto& q : p.qas) corpus += q.question + '\n';
        }
    }
    io::write_file(dir + "/corpus.txt", corpus);
    io::write_file(dir + "/pairs.jsonl", "{\"task\":\"translation\",\"source\":\"a b\",\"target\":\"c d\"}\n"
                                         "{\"task\":\"translation\",\"source\":\"e f\",\"target\":\"g h\"}\n");
    REQUIRE(invoke({"train-vocab", "--corpus", dir + "/corpus.txt", "--output", dir + "/vocab.txt", "--size", "400", "--coverage", "1"}).code == 0);
    REQUIRE(invoke({"train", "--data", dir + "/pairs.jsonl", "--vocab", dir + "/vocab.txt", "--output", dir + "/model.ckpt", "--set",
                 "steps=0", "--set", "seed=11"})
                .code == 0);
    const auto r = invoke({"eval-reqa", "--squad", squad, "--checkpoint", dir + "/model.ckpt", "--vocab", dir + "/vocab.txt", "--metrics",
                        dir + "/m.json", "--results", dir + "/r.tsv"});
    REQUIRE(r.code == 0);
    const auto value = nlohmann::json::parse(io::read_file(dir + "/m.json"))[0]["value"].get<double>();
    const double n = manifest["questions"].get<double>();
    const double p = 1.0 / manifest["sentences"].get<double>();
    CHECK(value <= p + 3.0 * std::sqrt(p * (1 - p) / n) + 1.0 / n);

    REQUIRE(invoke({"eval-reqa", "--squad", squad, "--level", "paragraph", "--bm25", "--metrics", dir + "/b.json", "--results", dir + "/b.tsv"}).code == 0);
    const auto bm25 = nlohmann::json::parse(io::read_file(dir + "/b.json"))[0]["value"].get<double>();
    CHECK(bm25 > 0.5);
}

TEST_CASE("bench emits a JSON report")
{
    const auto dir = fresh_dir("bench");
    const auto r = invoke({"bench", "--arch", "cnn", "--vocab-size", "50", "--lengths", "4,8", "--batch", "4", "--repeats", "1", "--output",
                        dir + "/bench.json"});
    REQUIRE(r.code == 0);
    const auto json = nlohmann::json::parse(io::read_file(dir + "/bench.json"));
    CHECK(json.dump().find("seconds_per_sentence") != std::string::npos);
    CHECK(invoke({"bench", "--arch", "cnn", "--lengths", "8,4"}).code == muse::cli::usage);
}

TEST_CASE("per-sentence time does not grow much with batch size")
{
    const auto model = make_model<float>(EncoderConfig::desk(Architecture::cnn, 100), 1);
    BenchReport small, large;
    BenchOptions options;
    options.lengths = {16};
    options.repeats = 5;
    options.batch = 8;
    run_bench(model, options, small);
    options.batch = 16;
    run_bench(model, options, large);
    CHECK(large.rows[0].seconds_per_sentence > 0);
    CHECK(large.rows[0].seconds_per_sentence < 1.5 * small.rows[0].seconds_per_sentence);
}
