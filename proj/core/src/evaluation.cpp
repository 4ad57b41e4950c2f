#include "muse/evaluation.hpp"

#include <thread>

namespace muse {

namespace {

std::vector<std::string> texts_of(const std::vector<TextItem>& items)
{
    std::vector<std::string> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(item.text);
    return out;
}

std::pair<std::vector<ResultList>, std::vector<RelevanceSet>> aligned(const RetrievalTaskSpec& task,
                                                                      const TaskResults& results)
{
    std::vector<ResultList> lists;
    std::vector<RelevanceSet> relevant;
    for (const auto& q : task.queries) {
        auto it = results.find(q.id);
        lists.push_back(it == results.end() ? ResultList{} : it->second);
        relevant.push_back(task.relevance.at(q.id));
    }
    return {std::move(lists), std::move(relevant)};
}

}  // namespace

TaskEmbeddings embed_task(const DualEncoderModel<float>& model, const SubwordVocabulary& vocab,
                          const RetrievalTaskSpec& task, const EncodeModes& modes, std::size_t threads)
{
    TaskEmbeddings out;
    out.queries = embed_texts(model, vocab, texts_of(task.queries), modes.query, {}, 64, threads);
    std::vector<std::string> contexts;
    if (modes.use_context) {
        for (const auto& c : task.candidates) contexts.push_back(c.context);
    }
    out.candidates = embed_texts(model, vocab, texts_of(task.candidates), modes.candidate, contexts, 64, threads);
    return out;
}

TaskResults dense_search(const RetrievalTaskSpec& task, const TaskEmbeddings& embeddings, std::size_t k, Metric metric,
                         std::size_t threads)
{
    if (k == 0) throw InvalidArgument("dense_search: k must be positive");
    std::vector<std::string> ids;
    for (const auto& c : task.candidates) ids.push_back(c.id);
    const EmbeddingIndex index(std::move(ids), embeddings.candidates);
    const std::size_t nq = task.queries.size();
    if (nq == 0) return {};
    if (embeddings.queries.rank() != 2 || embeddings.queries.dim(0) != nq) {
        throw InvalidArgument("dense_search: query matrix " + to_string(embeddings.queries.shape()) + " for "
                              + std::to_string(nq) + " queries");
    }
    const std::size_t d = embeddings.queries.dim(1);
    const std::size_t fetch = task.exclude_self ? k + 1 : k;

    std::vector<ResultList> lists(nq);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto list = index.top_k(std::span<const float>(embeddings.queries.data() + i * d, d), fetch, metric);
            if (task.exclude_self) {
                std::erase_if(list, [&](const ScoredResult& r) { return r.id == task.queries[i].id; });
                if (list.size() > k) list.resize(k);
                for (std::size_t r = 0; r < list.size(); ++r) list[r].rank = r + 1;
            }
            lists[i] = std::move(list);
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, nq));
    if (threads == 1) {
        work(0, nq);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (nq + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk, end = std::min(nq, begin + chunk);
            if (begin < end) pool.emplace_back(work, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    TaskResults out;
    for (std::size_t i = 0; i < nq; ++i) out[task.queries[i].id] = std::move(lists[i]);
    return out;
}

TaskResults bm25_search(const RetrievalTaskSpec& task, std::size_t k, double k1, double b)
{
    std::vector<std::pair<std::string, std::vector<std::string>>> docs;
    for (const auto& c : task.candidates) docs.emplace_back(c.id, lexical_tokens(c.text));
    const BM25Index index(std::move(docs), k1, b);
    TaskResults out;
    const std::size_t fetch = task.exclude_self ? k + 1 : k;
    for (const auto& q : task.queries) {
        auto list = index.search(lexical_tokens(q.text), fetch);
        if (task.exclude_self) {
            std::erase_if(list, [&](const ScoredResult& r) { return r.id == q.id; });
            if (list.size() > k) list.resize(k);
            for (std::size_t r = 0; r < list.size(); ++r) list[r].rank = r + 1;
        }
        out[q.id] = std::move(list);
    }
    return out;
}

TaskResults group_results(const RetrievalTaskSpec& sentence_task, const TaskResults& sentence_results)
{
    TaskResults out;
    for (const auto& [qid, list] : sentence_results) {
        out[qid] = paragraph_by_nearest_sentence(list, sentence_task.candidate_groups);
    }
    return out;
}

double task_map(const RetrievalTaskSpec& task, const TaskResults& results, std::size_t cutoff)
{
    const auto [lists, relevant] = aligned(task, results);
    return mean_average_precision(lists, relevant, cutoff);
}

double task_precision_at_1(const RetrievalTaskSpec& task, const TaskResults& results)
{
    const auto [lists, relevant] = aligned(task, results);
    return precision_at_1(lists, relevant);
}

}  // namespace muse
