#pragma once

// Randomised comparisons of the library's ranking and correlation code
// against the oracles. Each returns the number of disagreeing instances.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "muse/transfer.hpp"
#include "oracles.hpp"

namespace muse::oracle {

inline bool close(double a, double b, double tol = 1e-9)
{
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

struct RankingInstance {
    std::vector<ResultList> results;
    std::vector<RelevanceSet> relevant;
    std::vector<std::vector<std::string>> rankings;
};

/// Queries over a pool of candidates; result lists are random permutations
/// truncated at random lengths, relevance sets random non-empty subsets.
inline RankingInstance random_ranking(std::mt19937_64& rng)
{
    RankingInstance out;
    const std::size_t pool = 2 + rng() % 30, queries = 1 + rng() % 8;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < pool; ++i) ids.push_back("c" + std::to_string(i));
    for (std::size_t q = 0; q < queries; ++q) {
        auto order = ids;
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(rng() % (pool + 1));
        RelevanceSet rel;
        rel.insert(ids[rng() % pool]);
        for (const auto& id : ids) {
            if (rng() % 5 == 0) rel.insert(id);
        }
        ResultList list;
        for (std::size_t r = 0; r < order.size(); ++r) list.push_back({order[r], -static_cast<double>(r), r + 1});
        out.results.push_back(std::move(list));
        out.relevant.push_back(std::move(rel));
        out.rankings.push_back(std::move(order));
    }
    return out;
}

inline std::size_t check_map(std::uint64_t seed, std::size_t instances)
{
    std::mt19937_64 rng(seed);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < instances; ++i) {
        const auto inst = random_ranking(rng);
        const std::size_t cutoff = 1 + rng() % 40;
        bad += !close(mean_average_precision(inst.results, inst.relevant, cutoff),
                      mean_ap(inst.rankings, inst.relevant, cutoff));
    }
    return bad;
}

inline std::size_t check_precision_at_1(std::uint64_t seed, std::size_t instances)
{
    std::mt19937_64 rng(seed);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < instances; ++i) {
        const auto inst = random_ranking(rng);
        bad += !close(precision_at_1(inst.results, inst.relevant), precision_at_one(inst.rankings, inst.relevant));
    }
    return bad;
}

/// Dense top-k against a full sort of brute-force scores. Integer-valued
/// vectors make ties common, which exercises the id tie-break.
inline std::size_t check_top_k(std::uint64_t seed, std::size_t instances)
{
    std::mt19937_64 rng(seed);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t n = 1 + rng() % 40, d = 1 + rng() % 6, k = 1 + rng() % (n + 3);
        Tensor<float> m({n, d});
        std::vector<float> q(d);
        for (auto& v : m.values()) v = static_cast<float>(static_cast<int>(rng() % 7) - 3);
        for (auto& v : q) v = static_cast<float>(static_cast<int>(rng() % 7) - 3);
        std::vector<std::string> ids;
        std::vector<std::pair<std::string, double>> scored;
        for (std::size_t r = 0; r < n; ++r) {
            ids.push_back("c" + std::to_string(rng() % 1000) + "_" + std::to_string(r));
            double s = 0;
            for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(m[r * d + j]) * q[j];
            scored.emplace_back(ids.back(), s);
        }
        const auto expected = sort_top_k(scored, k);
        const auto got = EmbeddingIndex(ids, m).top_k(q, k, Metric::dot);
        bool ok = got.size() == expected.size();
        for (std::size_t r = 0; ok && r < got.size(); ++r) {
            ok = got[r].id == expected[r].first && close(got[r].score, expected[r].second) && got[r].rank == r + 1;
        }
        bad += !ok;
    }
    return bad;
}

inline std::size_t check_bm25(std::uint64_t seed, std::size_t instances)
{
    std::mt19937_64 rng(seed);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t n = 1 + rng() % 12, vocab = 2 + rng() % 10;
        std::vector<std::vector<std::string>> docs(n);
        std::vector<std::pair<std::string, std::vector<std::string>>> named;
        for (std::size_t d = 0; d < n; ++d) {
            const std::size_t len = 1 + rng() % 15;
            for (std::size_t t = 0; t < len; ++t) docs[d].push_back("w" + std::to_string(rng() % vocab));
            named.emplace_back("d" + std::to_string(d), docs[d]);
        }
        std::vector<std::string> query;
        for (std::size_t t = 0, len = 1 + rng() % 5; t < len; ++t) query.push_back("w" + std::to_string(rng() % (vocab + 2)));
        const double k1 = 0.5 + static_cast<double>(rng() % 100) / 50.0, b = static_cast<double>(rng() % 101) / 100.0;
        const BM25Index index(named, k1, b);
        const auto scores = index.scores(query);
        for (std::size_t d = 0; d < n; ++d) bad += !close(scores[d], bm25(query, docs, d, k1, b));
    }
    return bad;
}

inline std::vector<double> random_series(std::mt19937_64& rng, std::size_t n, bool ties)
{
    std::uniform_real_distribution<double> u(-5, 5);
    std::vector<double> v(n);
    for (auto& x : v) x = ties ? static_cast<double>(rng() % 4) : u(rng);
    return v;
}

inline bool constant(const std::vector<double>& v)
{
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

inline std::size_t check_correlation(std::uint64_t seed, std::size_t instances, bool rank_based)
{
    std::mt19937_64 rng(seed);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < instances;) {
        const std::size_t n = 2 + rng() % 30;
        const bool ties = rng() % 2;
        const auto x = random_series(rng, n, ties), y = random_series(rng, n, ties);
        if (constant(x) || constant(y)) continue;
        ++i;
        const double got = rank_based ? muse::spearman(x, y) : muse::pearson(x, y);
        const double want = rank_based ? spearman(x, y) : pearson(x, y);
        bad += !close(got, want, 1e-9);
    }
    return bad;
}

}  // namespace muse::oracle
