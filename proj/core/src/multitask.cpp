#include "muse/multitask.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <thread>

#include "json.hpp"
#include "muse/optimizer.hpp"

namespace muse {

std::string to_string(Task task)
{
    switch (task) {
    case Task::qa: return "qa";
    case Task::translation: return "translation";
    case Task::nli: return "nli";
    }
    return "unknown";
}

std::string to_string(NliLabel label)
{
    switch (label) {
    case NliLabel::entailment: return "entailment";
    case NliLabel::contradiction: return "contradiction";
    case NliLabel::neutral: return "neutral";
    }
    return "unknown";
}

NliLabel parse_nli_label(std::string_view name)
{
    if (name == "entailment") return NliLabel::entailment;
    if (name == "contradiction") return NliLabel::contradiction;
    if (name == "neutral") return NliLabel::neutral;
    throw InvalidArgument("unknown NLI label '" + std::string(name) + "'");
}

namespace {

std::string required_text(const nlohmann::json& record, const char* key, const std::string& source, std::size_t line)
{
    auto it = record.find(key);
    if (it == record.end() || !it->is_string()) throw DataError(source, line, std::string("missing string field '") + key + "'");
    std::string value = it->get<std::string>();
    if (value.empty()) throw DataError(source, line, std::string("field '") + key + "' is empty");
    return value;
}

}  // namespace

std::vector<TrainingExample> read_training_jsonl(std::istream& in, const std::string& source)
{
    std::vector<TrainingExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(source, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!record.is_object()) throw DataError(source, line_no, "record is not a JSON object");
        const std::string task = required_text(record, "task", source, line_no);
        TrainingExample ex;
        if (task == "translation") {
            ex.task = Task::translation;
            ex.source = required_text(record, "source", source, line_no);
            ex.target = required_text(record, "target", source, line_no);
        } else if (task == "qa") {
            ex.task = Task::qa;
            ex.source = required_text(record, "question", source, line_no);
            ex.target = required_text(record, "answer", source, line_no);
            if (auto it = record.find("context"); it != record.end() && it->is_string() && !it->get<std::string>().empty()) {
                ex.context = it->get<std::string>();
            }
        } else if (task == "nli") {
            ex.task = Task::nli;
            ex.source = required_text(record, "premise", source, line_no);
            ex.target = required_text(record, "hypothesis", source, line_no);
            try {
                ex.label = parse_nli_label(required_text(record, "label", source, line_no));
            } catch (const InvalidArgument& e) {
                throw DataError(source, line_no, e.what());
            }
        } else {
            throw DataError(source, line_no, "unknown task '" + task + "'");
        }
        if (auto it = record.find("lang_pair"); it != record.end() && it->is_string()) ex.lang_pair = it->get<std::string>();
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<TrainingExample> load_training_jsonl(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open training data '" + path + "'");
    return read_training_jsonl(in, path);
}

std::string to_jsonl(const TrainingExample& ex)
{
    nlohmann::ordered_json j;
    j["task"] = to_string(ex.task);
    switch (ex.task) {
    case Task::translation:
        j["source"] = ex.source;
        j["target"] = ex.target;
        break;
    case Task::qa:
        j["question"] = ex.source;
        j["answer"] = ex.target;
        if (ex.context) j["context"] = *ex.context;
        break;
    case Task::nli:
        j["premise"] = ex.source;
        j["hypothesis"] = ex.target;
        j["label"] = to_string(ex.label.value_or(NliLabel::neutral));
        break;
    }
    if (!ex.lang_pair.empty()) j["lang_pair"] = ex.lang_pair;
    return j.dump();
}

std::vector<std::int32_t> context_bag(const SubwordVocabulary& vocab, std::string_view text)
{
    return vocab.encode(text, std::numeric_limits<std::size_t>::max()).ids;
}

TaskBatch make_task_batch(const SubwordVocabulary& vocab, const EncoderConfig& config,
                          std::span<const TrainingExample> examples)
{
    if (examples.empty()) throw InvalidArgument("make_task_batch: no examples");
    TaskBatch batch;
    batch.task = examples.front().task;
    for (const auto& ex : examples) {
        if (ex.task != batch.task) throw InvalidArgument("make_task_batch: mixed tasks in one batch");
        batch.source.push_back(vocab.encode(ex.source, config.max_len));
        batch.target.push_back(vocab.encode(ex.target, config.max_len));
        if (batch.task == Task::qa) {
            batch.context.push_back(ex.context ? context_bag(vocab, *ex.context) : std::vector<std::int32_t>{});
        }
        if (batch.task == Task::nli) {
            if (!ex.label) throw InvalidArgument("make_task_batch: nli example without label");
            batch.labels.push_back(static_cast<std::int32_t>(*ex.label));
        }
    }
    return batch;
}

template <typename Real>
Var in_batch_ranking_loss(Graph<Real>& g, Var source, Var target)
{
    const Shape& s = g.shape(source);
    const Shape& t = g.shape(target);
    if (s.size() != 2 || s != t || s[0] == 0) {
        throw InvalidArgument("in_batch_ranking_loss: shapes " + to_string(s) + " and " + to_string(t) + " differ");
    }
    std::vector<std::int32_t> diagonal(s[0]);
    for (std::size_t i = 0; i < diagonal.size(); ++i) diagonal[i] = static_cast<std::int32_t>(i);
    return g.cross_entropy_from_logits(g.matmul(source, target, /*transpose_b=*/true), diagonal);
}

template <typename Real>
Var context_embeddings(Graph<Real>& g, const DualEncoderModel<Real>& model, std::span<const std::vector<std::int32_t>> bags)
{
    const std::size_t n = bags.size();
    std::vector<std::vector<std::int32_t>> present;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (!bags[i].empty()) {
            present.push_back(bags[i]);
            rows.push_back(i);
        }
    }
    if (present.empty()) return g.constant(Tensor<Real>(Shape{n, model.config.out_dim}));
    Var encoded = encode_dan(g, model.config, model.params, std::span<const std::vector<std::int32_t>>(present), "context");
    if (present.size() == n) return encoded;
    Tensor<Real> select(Shape{n, present.size()});
    for (std::size_t k = 0; k < rows.size(); ++k) select[rows[k] * present.size() + k] = Real(1);
    return g.matmul(g.constant(std::move(select)), encoded);
}

template <typename Real>
Var qa_loss(Graph<Real>& g, const DualEncoderModel<Real>& model, const TaskBatch& batch)
{
    const auto& c = model.config;
    const auto& p = model.params;
    if (batch.context.size() != batch.size()) throw InvalidArgument("qa_loss: context list is not parallel");
    const TokenBatch questions = make_token_batch(std::span<const TokenSequence>(batch.source));
    const TokenBatch answers = make_token_batch(std::span<const TokenSequence>(batch.target));
    const Var q_in[] = {encode_sentences(g, c, p, questions)};
    Var q = apply_task_head(g, TaskHead::qa_question, p, q_in);
    const Var r_in[] = {encode_sentences(g, c, p, answers), context_embeddings(g, model, std::span(batch.context))};
    Var r = apply_task_head(g, TaskHead::qa_response, p, r_in);
    return in_batch_ranking_loss(g, q, r);
}

template <typename Real>
Var translation_loss(Graph<Real>& g, const DualEncoderModel<Real>& model, const TaskBatch& batch)
{
    const TokenBatch src = make_token_batch(std::span<const TokenSequence>(batch.source));
    const TokenBatch tgt = make_token_batch(std::span<const TokenSequence>(batch.target));
    return in_batch_ranking_loss(g, encode_sentences(g, model.config, model.params, src),
                                 encode_sentences(g, model.config, model.params, tgt));
}

template <typename Real>
Var nli_loss(Graph<Real>& g, const DualEncoderModel<Real>& model, const TaskBatch& batch)
{
    if (batch.labels.size() != batch.size()) throw InvalidArgument("nli_loss: label list is not parallel");
    for (std::int32_t label : batch.labels) {
        if (label < 0 || label > 2) throw InvalidArgument("nli_loss: invalid label " + std::to_string(label));
    }
    const TokenBatch premises = make_token_batch(std::span<const TokenSequence>(batch.source));
    const TokenBatch hypotheses = make_token_batch(std::span<const TokenSequence>(batch.target));
    const Var in[] = {encode_sentences(g, model.config, model.params, premises),
                      encode_sentences(g, model.config, model.params, hypotheses)};
    Var logits = apply_task_head(g, TaskHead::nli, model.params, in);
    return g.cross_entropy_from_logits(logits, batch.labels);
}

template <typename Real>
Var task_loss(Graph<Real>& g, const DualEncoderModel<Real>& model, const TaskBatch& batch)
{
    switch (batch.task) {
    case Task::qa: return qa_loss(g, model, batch);
    case Task::translation: return translation_loss(g, model, batch);
    case Task::nli: return nli_loss(g, model, batch);
    }
    throw InvalidArgument("task_loss: unknown task");
}

const std::vector<TrainingExample>& TaskDatasets::of(Task task) const
{
    switch (task) {
    case Task::qa: return qa;
    case Task::translation: return translation;
    case Task::nli: return nli;
    }
    throw InvalidArgument("unknown task");
}

TaskDatasets group_by_task(std::span<const TrainingExample> examples)
{
    TaskDatasets out;
    for (const auto& ex : examples) {
        switch (ex.task) {
        case Task::qa: out.qa.push_back(ex); break;
        case Task::translation: out.translation.push_back(ex); break;
        case Task::nli: out.nli.push_back(ex); break;
        }
    }
    return out;
}

namespace {

/// Cycles through a pre-tokenised dataset in reshuffled epochs.
class BatchSampler {
  public:
    BatchSampler(Task task, const std::vector<TrainingExample>& examples, const SubwordVocabulary& vocab,
                 const EncoderConfig& config, std::uint64_t seed)
        : m_task(task), m_rng(seed)
    {
        for (const auto& ex : examples) {
            const TrainingExample* one = &ex;
            TaskBatch tb = make_task_batch(vocab, config, std::span<const TrainingExample>(one, 1));
            m_items.push_back(std::move(tb));
        }
        m_order.resize(m_items.size());
        for (std::size_t i = 0; i < m_order.size(); ++i) m_order[i] = i;
        reshuffle();
    }

    TaskBatch next(std::size_t batch_size)
    {
        TaskBatch out;
        out.task = m_task;
        for (std::size_t k = 0; k < batch_size; ++k) {
            if (m_cursor == m_order.size()) reshuffle();
            const TaskBatch& one = m_items[m_order[m_cursor++]];
            out.source.push_back(one.source.front());
            out.target.push_back(one.target.front());
            if (!one.context.empty()) out.context.push_back(one.context.front());
            if (!one.labels.empty()) out.labels.push_back(one.labels.front());
        }
        return out;
    }

    [[nodiscard]] std::size_t size() const noexcept { return m_items.size(); }

  private:
    void reshuffle()
    {
        for (std::size_t i = m_order.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(m_order[i - 1], m_order[pick(m_rng)]);
        }
        m_cursor = 0;
    }

    Task m_task;
    std::mt19937_64 m_rng;
    std::vector<TaskBatch> m_items;
    std::vector<std::size_t> m_order;
    std::size_t m_cursor = 0;
};

}  // namespace

TrainState train(DualEncoderModel<float> model, const SubwordVocabulary& vocab, const TaskDatasets& tasks,
                 const TrainOptions& options)
{
    model.config.validate();
    if (model.config.vocab_size != vocab.size()) {
        throw InvalidArgument("train: model vocab_size " + std::to_string(model.config.vocab_size)
                              + " does not match vocabulary of " + std::to_string(vocab.size()));
    }
    std::vector<BatchSampler> samplers;
    std::uint64_t stream = 0;
    for (Task task : {Task::qa, Task::translation, Task::nli}) {
        ++stream;
        const auto& data = tasks.of(task);
        if (data.empty()) continue;
        const bool ranking = task != Task::nli;
        if (ranking && std::min(options.batch_size, data.size()) < 2) {
            throw InvalidArgument("train: " + to_string(task) + " needs batch_size >= 2 for in-batch negatives");
        }
        if (options.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
        samplers.emplace_back(task, data, vocab, model.config, options.seed * 1000003ULL + stream);
    }
    if (samplers.empty()) throw InvalidArgument("train: every task dataset is empty");

    TrainState state{std::move(model), 0, options.seed, {}};
    const Task order[] = {Task::qa, Task::translation, Task::nli};
    std::vector<Task> present;
    for (Task t : order) {
        if (!tasks.of(t).empty()) present.push_back(t);
    }
    for (std::size_t s = 0; s < options.steps; ++s) {
        const std::size_t which = s % samplers.size();
        BatchSampler& sampler = samplers[which];
        const Task task = present[which];
        const TaskBatch batch = sampler.next(std::min(options.batch_size, sampler.size()));

        Graph<float> g;
        Var loss = task_loss(g, state.model, batch);
        const double value = g.value(loss).item();
        if (!std::isfinite(value)) throw NumericError("train: non-finite " + to_string(task) + " loss");
        g.backward(loss);
        ++state.step;
        adam_step(state.model.params, g.gradients(state.model.params), options.learning_rate, state.step);
        state.loss_curves[task].push_back(value);
        if (options.on_step) options.on_step(state.step, task, value);
    }
    return state;
}

Tensor<float> embed_texts(const DualEncoderModel<float>& model, const SubwordVocabulary& vocab,
                          std::span<const std::string> texts, EmbedMode mode, std::span<const std::string> contexts,
                          std::size_t batch_size, std::size_t threads)
{
    if (mode == EmbedMode::response && !contexts.empty() && contexts.size() != texts.size()) {
        throw InvalidArgument("embed_texts: contexts are not parallel to texts");
    }
    if (batch_size == 0) throw InvalidArgument("embed_texts: batch_size must be positive");
    const std::size_t n = texts.size();
    const std::size_t dim = model.config.out_dim;
    Tensor<float> out(Shape{n, dim});
    if (n == 0) return out;

    const std::size_t blocks = (n + batch_size - 1) / batch_size;
    auto run_block = [&](std::size_t block) {
        const std::size_t begin = block * batch_size;
        const std::size_t end = std::min(n, begin + batch_size);
        std::vector<TokenSequence> seqs;
        for (std::size_t i = begin; i < end; ++i) {
            seqs.push_back(vocab.encode(texts[i], model.config.max_len));
            if (seqs.back().ids.empty()) throw DataError("embed_texts: text " + std::to_string(i) + " has no tokens");
        }
        Graph<float> g(/*record=*/false);
        Var emb = encode_sentences(g, model.config, model.params, make_token_batch(std::span<const TokenSequence>(seqs)));
        if (mode == EmbedMode::question) {
            const Var in[] = {emb};
            emb = apply_task_head(g, TaskHead::qa_question, model.params, in);
        } else if (mode == EmbedMode::response) {
            std::vector<std::vector<std::int32_t>> bags;
            for (std::size_t i = begin; i < end; ++i) {
                bags.push_back(contexts.empty() ? std::vector<std::int32_t>{} : context_bag(vocab, contexts[i]));
            }
            const Var in[] = {emb, context_embeddings(g, model, std::span<const std::vector<std::int32_t>>(bags))};
            emb = apply_task_head(g, TaskHead::qa_response, model.params, in);
        }
        const Tensor<float>& v = g.value(emb);
        std::copy(v.data(), v.data() + v.size(), out.data() + begin * dim);
    };

    threads = std::max<std::size_t>(1, std::min(threads, blocks));
    if (threads == 1) {
        for (std::size_t b = 0; b < blocks; ++b) run_block(b);
        return out;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t b = w; b < blocks; b += threads) run_block(b);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

#define MUSE_INSTANTIATE_MULTITASK(Real)                                                                           \
    template Var in_batch_ranking_loss<Real>(Graph<Real>&, Var, Var);                                              \
    template Var context_embeddings<Real>(Graph<Real>&, const DualEncoderModel<Real>&,                             \
                                          std::span<const std::vector<std::int32_t>>);                             \
    template Var qa_loss<Real>(Graph<Real>&, const DualEncoderModel<Real>&, const TaskBatch&);                     \
    template Var translation_loss<Real>(Graph<Real>&, const DualEncoderModel<Real>&, const TaskBatch&);            \
    template Var nli_loss<Real>(Graph<Real>&, const DualEncoderModel<Real>&, const TaskBatch&);                    \
    template Var task_loss<Real>(Graph<Real>&, const DualEncoderModel<Real>&, const TaskBatch&);

MUSE_INSTANTIATE_MULTITASK(float)
MUSE_INSTANTIATE_MULTITASK(double)

}  // namespace muse
