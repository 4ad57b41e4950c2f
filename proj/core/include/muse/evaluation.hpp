#pragma once

#include <map>
#include <string>

#include "muse/multitask.hpp"
#include "muse/retrieval.hpp"
#include "muse/taskgen.hpp"

// Glue between task specs, encoders and the ranking metrics.
namespace muse {

using TaskResults = std::map<std::string, ResultList>;

struct TaskEmbeddings {
    Tensor<float> queries;     // rows follow task.queries
    Tensor<float> candidates;  // rows follow task.candidates
};

struct EncodeModes {
    EmbedMode query = EmbedMode::sentence;
    EmbedMode candidate = EmbedMode::sentence;
    /// Pass candidate context text to the response encoder.
    bool use_context = false;
};

TaskEmbeddings embed_task(const DualEncoderModel<float>& model, const SubwordVocabulary& vocab,
                          const RetrievalTaskSpec& task, const EncodeModes& modes, std::size_t threads = 1);

/// Exhaustive top-k for every query. With task.exclude_self, a query never
/// appears in its own list (ranks are renumbered).
TaskResults dense_search(const RetrievalTaskSpec& task, const TaskEmbeddings& embeddings, std::size_t k,
                         Metric metric = Metric::dot, std::size_t threads = 1);

/// BM25 over candidate texts with lexical_tokens().
TaskResults bm25_search(const RetrievalTaskSpec& task, std::size_t k, double k1 = BM25Index::default_k1,
                        double b = BM25Index::default_b);

/// Maps every sentence list to its paragraph ranking via candidate_groups.
TaskResults group_results(const RetrievalTaskSpec& sentence_task, const TaskResults& sentence_results);

/// Metric over the task's queries, in task order. Missing result lists count
/// as empty rankings.
double task_map(const RetrievalTaskSpec& task, const TaskResults& results, std::size_t cutoff = 100);
double task_precision_at_1(const RetrievalTaskSpec& task, const TaskResults& results);

}  // namespace muse
