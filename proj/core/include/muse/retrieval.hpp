#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "muse/tensor.hpp"

namespace muse {

enum class Metric { dot, angular };

std::string to_string(Metric metric);
Metric parse_metric(std::string_view name);

double dot_product(std::span<const float> u, std::span<const float> v);
double cosine_similarity(std::span<const float> u, std::span<const float> v);

/// -arccos(cos(u, v)) with the cosine clamped to [-1, 1]; lies in [-pi, 0].
double angular_similarity(std::span<const float> u, std::span<const float> v);

struct ScoredResult {
    std::string id;
    double score = 0.0;
    std::size_t rank = 0;

    bool operator==(const ScoredResult&) const = default;
};

using ResultList = std::vector<ScoredResult>;
using RelevanceSet = std::set<std::string>;

/// Exhaustive dense index. Immutable after construction.
class EmbeddingIndex {
  public:
    EmbeddingIndex(std::vector<std::string> ids, Tensor<float> matrix);

    [[nodiscard]] std::size_t size() const noexcept { return m_ids.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return m_dim; }
    [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return m_ids; }
    [[nodiscard]] std::span<const float> row(std::size_t i) const;
    [[nodiscard]] double norm(std::size_t i) const { return m_norms.at(i); }

    /// Exact top-k by the metric; equal scores are ordered by id ascending.
    [[nodiscard]] ResultList top_k(std::span<const float> query, std::size_t k, Metric metric) const;

  private:
    std::vector<std::string> m_ids;
    Tensor<float> m_matrix;
    std::size_t m_dim = 0;
    std::vector<double> m_norms;
};

/// Sorts (id, score) pairs by score descending then id ascending, keeps k and
/// assigns 1-based ranks.
ResultList rank_scores(std::vector<std::pair<std::string, double>> scored, std::size_t k);

/// Per query, AP = sum of precision@r over relevant hits at r <= cutoff,
/// divided by min(|relevant|, cutoff); returns the mean over queries.
double mean_average_precision(std::span<const ResultList> results, std::span<const RelevanceSet> relevant,
                              std::size_t cutoff = 100);

double precision_at_1(std::span<const ResultList> results, std::span<const RelevanceSet> relevant);

/// Lowercases ASCII and splits on anything that is not a letter or digit.
/// Non-ASCII bytes count as word characters.
std::vector<std::string> lexical_tokens(std::string_view text);

/// Okapi BM25 with idf = ln((N - df + 0.5) / (df + 0.5) + 1).
class BM25Index {
  public:
    static constexpr double default_k1 = 1.2;
    static constexpr double default_b = 0.75;

    BM25Index(std::vector<std::pair<std::string, std::vector<std::string>>> documents, double k1 = default_k1,
              double b = default_b);

    [[nodiscard]] std::size_t size() const noexcept { return m_ids.size(); }
    [[nodiscard]] double average_length() const noexcept { return m_avg_len; }
    [[nodiscard]] std::size_t document_frequency(const std::string& term) const;
    [[nodiscard]] double idf(const std::string& term) const;

    /// Scores every document; query terms are summed with multiplicity.
    [[nodiscard]] std::vector<double> scores(std::span<const std::string> query) const;
    [[nodiscard]] ResultList search(std::span<const std::string> query, std::size_t k) const;

  private:
    std::vector<std::string> m_ids;
    std::vector<std::size_t> m_lengths;
    double m_avg_len = 0.0;
    double m_k1;
    double m_b;
    /// term -> (document index, term frequency) postings.
    std::unordered_map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> m_postings;
};

}  // namespace muse
