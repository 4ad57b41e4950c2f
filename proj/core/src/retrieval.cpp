#include "muse/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <numbers>

namespace muse {

std::string to_string(Metric metric)
{
    return metric == Metric::dot ? "dot" : "angular";
}

Metric parse_metric(std::string_view name)
{
    if (name == "dot") return Metric::dot;
    if (name == "angular") return Metric::angular;
    throw InvalidArgument("unknown metric '" + std::string(name) + "' (expected dot or angular)");
}

double dot_product(std::span<const float> u, std::span<const float> v)
{
    if (u.size() != v.size()) {
        throw InvalidArgument("dot_product: dimensions " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    return acc;
}

double cosine_similarity(std::span<const float> u, std::span<const float> v)
{
    const double nu = std::sqrt(dot_product(u, u));
    const double nv = std::sqrt(dot_product(v, v));
    if (nu == 0.0 || nv == 0.0) throw InvalidArgument("cosine_similarity: zero vector");
    return dot_product(u, v) / (nu * nv);
}

double angular_similarity(std::span<const float> u, std::span<const float> v)
{
    return -std::acos(std::clamp(cosine_similarity(u, v), -1.0, 1.0));
}

EmbeddingIndex::EmbeddingIndex(std::vector<std::string> ids, Tensor<float> matrix)
    : m_ids(std::move(ids)), m_matrix(std::move(matrix))
{
    if (m_matrix.rank() != 2 || m_matrix.dim(0) != m_ids.size()) {
        throw InvalidArgument("EmbeddingIndex: matrix " + to_string(m_matrix.shape()) + " does not match "
                              + std::to_string(m_ids.size()) + " ids");
    }
    std::set<std::string> seen;
    for (const auto& id : m_ids) {
        if (!seen.insert(id).second) throw InvalidArgument("EmbeddingIndex: duplicate id '" + id + "'");
    }
    m_dim = m_matrix.dim(1);
    m_norms.reserve(m_ids.size());
    for (std::size_t i = 0; i < m_ids.size(); ++i) m_norms.push_back(std::sqrt(dot_product(row(i), row(i))));
}

std::span<const float> EmbeddingIndex::row(std::size_t i) const
{
    return {m_matrix.data() + i * m_dim, m_dim};
}

ResultList rank_scores(std::vector<std::pair<std::string, double>> scored, std::size_t k)
{
    auto better = [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; };
    const std::size_t keep = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
    ResultList out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back({std::move(scored[i].first), scored[i].second, i + 1});
    return out;
}

ResultList EmbeddingIndex::top_k(std::span<const float> query, std::size_t k, Metric metric) const
{
    if (m_ids.empty()) throw InvalidArgument("top_k: empty index");
    if (k < 1) throw InvalidArgument("top_k: k must be >= 1");
    if (query.size() != m_dim) {
        throw InvalidArgument("top_k: query dimension " + std::to_string(query.size()) + " != index dimension "
                              + std::to_string(m_dim));
    }
    double qnorm = 0.0;
    if (metric == Metric::angular) {
        qnorm = std::sqrt(dot_product(query, query));
        if (qnorm == 0.0) throw InvalidArgument("top_k: zero query vector under the angular metric");
    }
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(m_ids.size());
    for (std::size_t i = 0; i < m_ids.size(); ++i) {
        const double dot = dot_product(query, row(i));
        double score = dot;
        if (metric == Metric::angular) {
            if (m_norms[i] == 0.0) throw InvalidArgument("top_k: candidate '" + m_ids[i] + "' has a zero vector");
            score = -std::acos(std::clamp(dot / (qnorm * m_norms[i]), -1.0, 1.0));
        }
        scored.emplace_back(m_ids[i], score);
    }
    return rank_scores(std::move(scored), k);
}

namespace {

void check_queries(std::span<const ResultList> results, std::span<const RelevanceSet> relevant, const char* who)
{
    if (results.empty()) throw InvalidArgument(std::string(who) + ": no queries");
    if (results.size() != relevant.size()) {
        throw InvalidArgument(std::string(who) + ": " + std::to_string(results.size()) + " result lists but "
                              + std::to_string(relevant.size()) + " relevance sets");
    }
    for (std::size_t q = 0; q < relevant.size(); ++q) {
        if (relevant[q].empty()) throw InvalidArgument(std::string(who) + ": query " + std::to_string(q) + " has no relevant candidates");
    }
}

}  // namespace

double mean_average_precision(std::span<const ResultList> results, std::span<const RelevanceSet> relevant, std::size_t cutoff)
{
    check_queries(results, relevant, "mean_average_precision");
    if (cutoff == 0) throw InvalidArgument("mean_average_precision: cutoff must be >= 1");
    double total = 0.0;
    for (std::size_t q = 0; q < results.size(); ++q) {
        const auto& list = results[q];
        std::size_t hits = 0;
        double precision_sum = 0.0;
        const std::size_t depth = std::min(cutoff, list.size());
        for (std::size_t r = 0; r < depth; ++r) {
            if (relevant[q].count(list[r].id)) {
                ++hits;
                precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
            }
        }
        total += precision_sum / static_cast<double>(std::min(relevant[q].size(), cutoff));
    }
    return total / static_cast<double>(results.size());
}

double precision_at_1(std::span<const ResultList> results, std::span<const RelevanceSet> relevant)
{
    check_queries(results, relevant, "precision_at_1");
    std::size_t hits = 0;
    for (std::size_t q = 0; q < results.size(); ++q) {
        if (!results[q].empty() && relevant[q].count(results[q].front().id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<std::string> lexical_tokens(std::string_view text)
{
    std::vector<std::string> out;
    std::string current;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (u >= 0x80 || std::isalnum(u)) {
            current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

BM25Index::BM25Index(std::vector<std::pair<std::string, std::vector<std::string>>> documents, double k1, double b)
    : m_k1(k1), m_b(b)
{
    if (documents.empty()) throw InvalidArgument("bm25_build: empty corpus");
    std::set<std::string> seen;
    std::size_t total = 0;
    for (std::size_t d = 0; d < documents.size(); ++d) {
        auto& [id, tokens] = documents[d];
        if (!seen.insert(id).second) throw InvalidArgument("bm25_build: duplicate document id '" + id + "'");
        if (tokens.empty()) throw InvalidArgument("bm25_build: document '" + id + "' has no tokens");
        std::map<std::string, std::size_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) m_postings[term].emplace_back(d, count);
        m_lengths.push_back(tokens.size());
        total += tokens.size();
        m_ids.push_back(std::move(id));
    }
    m_avg_len = static_cast<double>(total) / static_cast<double>(m_ids.size());
}

std::size_t BM25Index::document_frequency(const std::string& term) const
{
    auto it = m_postings.find(term);
    return it == m_postings.end() ? 0 : it->second.size();
}

double BM25Index::idf(const std::string& term) const
{
    const double n = static_cast<double>(m_ids.size());
    const double df = static_cast<double>(document_frequency(term));
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<double> BM25Index::scores(std::span<const std::string> query) const
{
    if (query.empty()) throw InvalidArgument("bm25_search: empty query");
    std::vector<double> out(m_ids.size(), 0.0);
    for (const auto& term : query) {
        auto it = m_postings.find(term);
        if (it == m_postings.end()) continue;
        const double w = idf(term);
        for (const auto& [doc, freq] : it->second) {
            const double tf = static_cast<double>(freq);
            const double norm = 1.0 - m_b + m_b * static_cast<double>(m_lengths[doc]) / m_avg_len;
            out[doc] += w * tf * (m_k1 + 1.0) / (tf + m_k1 * norm);
        }
    }
    return out;
}

ResultList BM25Index::search(std::span<const std::string> query, std::size_t k) const
{
    if (k < 1) throw InvalidArgument("bm25_search: k must be >= 1");
    const auto s = scores(query);
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(s.size());
    for (std::size_t d = 0; d < s.size(); ++d) scored.emplace_back(m_ids[d], s[d]);
    return rank_scores(std::move(scored), k);
}

}  // namespace muse
