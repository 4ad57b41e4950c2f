#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "muse/retrieval.hpp"
#include "muse/tensor.hpp"

namespace muse {

struct TextItem {
    std::string id;
    std::string text;
    /// Surrounding text for candidates that carry it (ReQA sentences).
    std::string context;

    bool operator==(const TextItem&) const = default;
};

/// Queries, candidate pool and relevance judgments of one retrieval task.
struct RetrievalTaskSpec {
    std::string kind;           // "sr", "bitext" or "reqa"
    std::string language_pair;  // e.g. "en-en", "de-en"
    std::string level;          // "sentence" or "paragraph"
    /// SR queries are themselves candidates and are removed from their own
    /// result lists before scoring.
    bool exclude_self = false;
    std::vector<TextItem> queries;
    std::vector<TextItem> candidates;
    std::map<std::string, RelevanceSet> relevance;
    /// Candidate id -> enclosing group id (sentence -> paragraph for ReQA).
    std::map<std::string, std::string> candidate_groups;

    bool operator==(const RetrievalTaskSpec&) const = default;
};

/// Throws DataError unless ids are unique, every relevance target is a
/// candidate, and every query has at least one relevant candidate.
void validate_task(const RetrievalTaskSpec& task);

std::string task_to_json(const RetrievalTaskSpec& task);
RetrievalTaskSpec task_from_json(std::string_view json, const std::string& source = "<task>");
void save_task(const std::string& path, const RetrievalTaskSpec& task);
RetrievalTaskSpec load_task(const std::string& path);

using Cluster = std::vector<std::string>;

/// Connected components of the positive-pair graph. Members are sorted and
/// clusters ordered by their smallest member.
std::vector<Cluster> transitive_closure(std::span<const std::pair<std::string, std::string>> pairs);

/// Every text is a candidate (ids absent from all clusters are singletons);
/// each member of a cluster of size >= 2 becomes a query whose relevant set is
/// the rest of its cluster.
RetrievalTaskSpec build_sr_task(std::span<const Cluster> clusters, const std::map<std::string, std::string>& texts);

/// Byte interval [start, end) of one sentence within its paragraph.
struct SentenceSpan {
    std::string paragraph_id;
    std::size_t index = 0;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const SentenceSpan&) const = default;
};

/// Rule-based splitter: a sentence ends after a run of . ! ? (plus closing
/// quotes or brackets) that is followed by whitespace and then an uppercase,
/// digit, opening or uncased character, unless the word ending in '.' is a
/// known abbreviation or a single-letter initial.
std::vector<SentenceSpan> split_sentences(std::string_view text);

struct SquadQuestion {
    std::string id;
    std::string question;
    std::string answer_text;
    /// Byte offset of the answer in the paragraph (converted from SQuAD's
    /// code-point offset on load).
    std::size_t answer_start = 0;
};

struct SquadParagraph {
    std::string context;
    std::vector<SquadQuestion> qas;
};

struct SquadDocument {
    std::string title;
    std::vector<SquadParagraph> paragraphs;
};

/// SQuAD v1.0 JSON (data -> paragraphs -> qas -> answers). Uses the first
/// answer of each question.
std::vector<SquadDocument> parse_squad(std::string_view json, const std::string& source = "<squad>");
std::vector<SquadDocument> load_squad(const std::string& path);

enum class ReqaLevel { sentence, paragraph };

/// Sentence level: candidates are all sentences (context = paragraph text),
/// the relevant sentence is the one containing the answer start. Paragraph
/// level: candidates are paragraphs. Candidate ids are "d<doc>.p<para>" and
/// "d<doc>.p<para>.s<sent>".
RetrievalTaskSpec build_reqa(std::span<const SquadDocument> docs, ReqaLevel level);

/// Paragraph ranking by first occurrence in a sentence ranking.
ResultList paragraph_by_nearest_sentence(const ResultList& sentence_results,
                                         const std::map<std::string, std::string>& sentence_to_paragraph);

enum class BitextDirection { source_to_target, target_to_source };

RetrievalTaskSpec build_bitext_task(std::span<const std::pair<std::string, std::string>> pairs,
                                    BitextDirection direction, const std::string& language_pair = "xx-yy");

/// keep[i] iff cosine(original_i, backtranslated_i) >= threshold.
std::vector<bool> backtranslation_filter(const Tensor<float>& original, const Tensor<float>& backtranslated,
                                         double threshold = 0.5);

/// Replaces query texts with their translations; queries without one are
/// dropped. Candidates and the remaining relevance sets are untouched.
RetrievalTaskSpec make_cross_lingual(const RetrievalTaskSpec& task, const std::map<std::string, std::string>& translations,
                                     const std::string& query_language);

}  // namespace muse
