#include <cmath>
#include <numbers>

#include "doctest.h"
#include "invariants.hpp"
#include "metric_checks.hpp"

using namespace muse;

namespace {

ResultList ranked(std::vector<std::string> ids)
{
    ResultList out;
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], -static_cast<double>(i), i + 1});
    return out;
}

}  // namespace

TEST_CASE("angular similarity")
{
    const std::vector<float> u{1, 2, 3}, v{3, 0, -1}, w{-1, -2, -3};
    CHECK(angular_similarity(u, u) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(angular_similarity(u, v) == doctest::Approx(-std::numbers::pi / 2));
    CHECK(angular_similarity(u, w) == doctest::Approx(-std::numbers::pi));
    CHECK(angular_similarity(u, v) == angular_similarity(v, u));
    const std::vector<float> zero{0, 0, 0};
    CHECK_THROWS_AS(angular_similarity(u, zero), InvalidArgument);
    CHECK_THROWS_AS(dot_product(u, std::vector<float>{1, 2}), InvalidArgument);
}

TEST_CASE("top_k returns the query itself first and everything when k is large")
{
    Tensor<float> m({3, 2}, {1, 0, 0.6f, 0.8f, -1, 0});
    const EmbeddingIndex index({"x", "y", "z"}, m);
    const std::vector<float> q{0.6f, 0.8f};
    for (auto metric : {Metric::dot, Metric::angular}) {
        const auto r = index.top_k(q, 10, metric);
        REQUIRE(r.size() == 3);
        CHECK(r[0].id == "y");
        CHECK(r[2].id == "z");
        CHECK(r[0].rank == 1);
        CHECK(r[0].score >= r[1].score);
    }
    CHECK_THROWS_AS(index.top_k(q, 0, Metric::dot), InvalidArgument);
    CHECK_THROWS_AS(index.top_k(std::vector<float>{1}, 1, Metric::dot), InvalidArgument);
    CHECK_THROWS_AS(EmbeddingIndex({"a", "a"}, Tensor<float>({2, 1}, {1, 2})), InvalidArgument);
    CHECK_THROWS_AS(EmbeddingIndex({}, Tensor<float>({0, 2})).top_k(q, 1, Metric::dot), InvalidArgument);
}

TEST_CASE("ties are broken by id")
{
    const EmbeddingIndex index({"b", "c", "a"}, Tensor<float>({3, 1}, {1, 1, 1}));
    const auto r = index.top_k(std::vector<float>{2}, 3, Metric::dot);
    CHECK(r[0].id == "a");
    CHECK(r[1].id == "b");
    CHECK(r[2].id == "c");
}

TEST_CASE("top_k against a full sort")
{
    CHECK(oracle::check_top_k(11, 200) == 0);
}

TEST_CASE("MAP worked examples")
{
    const std::vector<RelevanceSet> rel{{"a"}};
    CHECK(mean_average_precision(std::vector<ResultList>{ranked({"a", "b"})}, rel) == 1.0);
    CHECK(mean_average_precision(std::vector<ResultList>{ranked({"b", "a"})}, rel) == 0.5);
    // Denominator is min(|relevant|, cutoff): a perfect list stays at 1.
    const std::vector<RelevanceSet> many{{"a", "b", "c"}};
    CHECK(mean_average_precision(std::vector<ResultList>{ranked({"a", "b", "c"})}, many, 2) == 1.0);
    CHECK(mean_average_precision(std::vector<ResultList>{ranked({"x", "a"})}, many, 1) == 0.0);
    CHECK_THROWS_AS(mean_average_precision(std::vector<ResultList>{ranked({"a"})}, std::vector<RelevanceSet>{{}}), InvalidArgument);
    CHECK_THROWS_AS(mean_average_precision(std::vector<ResultList>{ranked({"a"})}, rel, 0), InvalidArgument);
}

TEST_CASE("MAP and P@1 against the literal definitions")
{
    CHECK(oracle::check_map(21, 300) == 0);
    CHECK(oracle::check_precision_at_1(22, 300) == 0);
}

TEST_CASE("MAP is order-invariant over queries and non-decreasing in cutoff")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto inst = oracle::random_ranking(rng);
        double last = 0.0;
        for (std::size_t cutoff = 1; cutoff < 35; ++cutoff) {
            // Denominator shrinks with cutoff, so only compare where it is fixed.
            std::size_t max_rel = 0;
            for (const auto& r : inst.relevant) max_rel = std::max(max_rel, r.size());
            const double now = mean_average_precision(inst.results, inst.relevant, cutoff);
            if (cutoff > max_rel) CHECK(now >= last - 1e-12);
            last = now;
        }
        const double before = mean_average_precision(inst.results, inst.relevant);
        const double p1 = precision_at_1(inst.results, inst.relevant);
        std::reverse(inst.results.begin(), inst.results.end());
        std::reverse(inst.relevant.begin(), inst.relevant.end());
        CHECK(mean_average_precision(inst.results, inst.relevant) == doctest::Approx(before).epsilon(1e-12));
        CHECK(precision_at_1(inst.results, inst.relevant) == doctest::Approx(p1).epsilon(1e-12));
    }
}

TEST_CASE("P@1 examples")
{
    CHECK(precision_at_1(std::vector<ResultList>{ranked({"a"}), ranked({"b", "a"})}, std::vector<RelevanceSet>{{"a"}, {"b"}}) == 1.0);
    CHECK_THROWS_AS(precision_at_1(std::vector<ResultList>{}, std::vector<RelevanceSet>{}), InvalidArgument);
}

TEST_CASE("BM25 toy corpus")
{
    const std::vector<std::vector<std::string>> docs{{"the", "cat", "sat"}, {"the", "dog"}, {"a", "cat", "and", "a", "cat"}};
    const BM25Index index({{"d0", docs[0]}, {"d1", docs[1]}, {"d2", docs[2]}});
    CHECK(index.document_frequency("cat") == 2);
    CHECK(index.idf("cat") == doctest::Approx(std::log(1.5 / 2.5 + 1.0)));
    // Hand evaluation: avg length 10/3; d2 has tf(cat)=2, length 5.
    const double idf_cat = std::log(1.6), idf_dog = std::log(2.5 / 1.5 + 1.0);
    const double d2 = idf_cat * 2 * 2.2 / (2 + 1.2 * (0.25 + 0.75 * 5 / (10.0 / 3)));
    const double d1 = idf_dog * 2.2 / (1 + 1.2 * (0.25 + 0.75 * 2 / (10.0 / 3)));
    const std::vector<std::string> query{"cat", "dog"};
    const auto scores = index.scores(query);
    CHECK(scores[2] == doctest::Approx(d2).epsilon(1e-9));
    CHECK(scores[1] == doctest::Approx(d1).epsilon(1e-9));
    const std::vector<std::string> dog{"dog"};
    CHECK(index.search(dog, 1).front().id == "d1");
    CHECK_THROWS_AS(index.search(std::vector<std::string>{}, 1), InvalidArgument);
    CHECK_THROWS_AS(BM25Index({}), InvalidArgument);
}

TEST_CASE("BM25 ties between identical documents go to the smaller id")
{
    const BM25Index index({{"z", {"x", "y"}}, {"m", {"x", "y"}}, {"q", {"w"}}});
    const auto r = index.search(std::vector<std::string>{"x"}, 3);
    CHECK(r[0].id == "m");
    CHECK(r[1].id == "z");
    CHECK(r[0].score == r[1].score);
}

TEST_CASE("BM25 against the formula")
{
    CHECK(oracle::check_bm25(31, 200) == 0);
}

TEST_CASE("lexical tokens")
{
    CHECK(lexical_tokens("Hello, World! x-2") == std::vector<std::string>{"hello", "world", "x", "2"});
    CHECK(lexical_tokens("  ").empty());
}

TEST_CASE("dot and angular agree on unit vectors")
{
    CHECK(oracle::dot_angular_agree(3, 30));
}
