#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "muse/autograd.hpp"
#include "muse/encoders.hpp"
#include "muse/subword.hpp"

namespace muse {

enum class Task { qa, translation, nli };
enum class NliLabel : std::int32_t { entailment = 0, contradiction = 1, neutral = 2 };

std::string to_string(Task task);
std::string to_string(NliLabel label);
NliLabel parse_nli_label(std::string_view name);

/// One training record. For qa, source/target are question/answer; for nli,
/// premise/hypothesis.
struct TrainingExample {
    Task task = Task::translation;
    std::string source;
    std::string target;
    std::optional<std::string> context;
    std::optional<NliLabel> label;
    std::string lang_pair;

    bool operator==(const TrainingExample&) const = default;
};

/// JSON-lines records. Unknown fields are ignored; an unknown task, a missing
/// field or an empty text raises DataError with the line number.
std::vector<TrainingExample> read_training_jsonl(std::istream& in, const std::string& source = "<jsonl>");
std::vector<TrainingExample> load_training_jsonl(const std::string& path);
std::string to_jsonl(const TrainingExample& example);

/// Deterministic shuffled split; the train side gets round(fraction * n).
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_dev(std::vector<T> examples, double train_fraction, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    for (std::size_t i = examples.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(examples[i - 1], examples[pick(rng)]);
    }
    const auto n_train = std::min(examples.size(),
                                  static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(examples.size()))));
    std::vector<T> dev(std::make_move_iterator(examples.begin() + static_cast<std::ptrdiff_t>(n_train)),
                       std::make_move_iterator(examples.end()));
    examples.resize(n_train);
    return {std::move(examples), std::move(dev)};
}

/// Tokenised, parallel view of a batch of examples for one task.
struct TaskBatch {
    Task task = Task::translation;
    std::vector<TokenSequence> source;
    std::vector<TokenSequence> target;
    /// Context bag per example; empty when the example has no context.
    std::vector<std::vector<std::int32_t>> context;
    std::vector<std::int32_t> labels;

    [[nodiscard]] std::size_t size() const noexcept { return source.size(); }
};

TaskBatch make_task_batch(const SubwordVocabulary& vocab, const EncoderConfig& config,
                          std::span<const TrainingExample> examples);

template <typename Real>
struct DualEncoderModel {
    EncoderConfig config;
    ParameterSet<Real> params;
};

template <typename Real>
DualEncoderModel<Real> make_model(const EncoderConfig& config, std::uint64_t seed)
{
    return {config, init_parameters<Real>(config, seed)};
}

/// Mean over rows of -log softmax(source . target^T)[i, i].
template <typename Real>
Var in_batch_ranking_loss(Graph<Real>& g, Var source, Var target);

/// Context tower output per example: DAN(bag) where present, zeros otherwise.
template <typename Real>
Var context_embeddings(Graph<Real>& g, const DualEncoderModel<Real>& model,
                       std::span<const std::vector<std::int32_t>> bags);

template <typename Real>
Var qa_loss(Graph<Real>& g, const DualEncoderModel<Real>& model, const TaskBatch& batch);
template <typename Real>
Var translation_loss(Graph<Real>& g, const DualEncoderModel<Real>& model, const TaskBatch& batch);
template <typename Real>
Var nli_loss(Graph<Real>& g, const DualEncoderModel<Real>& model, const TaskBatch& batch);
template <typename Real>
Var task_loss(Graph<Real>& g, const DualEncoderModel<Real>& model, const TaskBatch& batch);

struct TaskDatasets {
    std::vector<TrainingExample> qa;
    std::vector<TrainingExample> translation;
    std::vector<TrainingExample> nli;

    [[nodiscard]] const std::vector<TrainingExample>& of(Task task) const;
};

TaskDatasets group_by_task(std::span<const TrainingExample> examples);

struct TrainOptions {
    std::size_t steps = 1000;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    /// Called after every optimizer step with (step, task, loss).
    std::function<void(std::int64_t, Task, double)> on_step;
};

struct TrainState {
    DualEncoderModel<float> model;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    std::map<Task, std::vector<double>> loss_curves;
};

/// Round-robin over the present tasks (qa, translation, nli), one Adam step
/// per batch. Deterministic for a given seed.
TrainState train(DualEncoderModel<float> model, const SubwordVocabulary& vocab, const TaskDatasets& tasks,
                 const TrainOptions& options);

enum class EmbedMode { sentence, question, response };

/// Encodes texts without recording gradients. Work is sharded into fixed
/// batch_size blocks, so results do not depend on the thread count. For
/// response mode, `contexts` is parallel to `texts` (empty string = none).
Tensor<float> embed_texts(const DualEncoderModel<float>& model, const SubwordVocabulary& vocab,
                          std::span<const std::string> texts, EmbedMode mode,
                          std::span<const std::string> contexts = {}, std::size_t batch_size = 64,
                          std::size_t threads = 1);

/// Word bag for the context tower: every token of the text, untruncated.
std::vector<std::int32_t> context_bag(const SubwordVocabulary& vocab, std::string_view text);

}  // namespace muse
