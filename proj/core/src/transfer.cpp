#include "muse/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "muse/autograd.hpp"
#include "muse/optimizer.hpp"
#include "muse/retrieval.hpp"

namespace muse {

namespace {

void check_labels(std::span<const std::int32_t> labels, std::size_t classes, std::size_t rows)
{
    if (labels.size() != rows) {
        throw InvalidArgument("probe: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw InvalidArgument("probe: label " + std::to_string(labels[i]) + " at row " + std::to_string(i)
                                  + " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

Var probe_logits(Graph<float>& g, const ParameterSet<float>& params, const Tensor<float>& embeddings)
{
    Var x = g.constant(embeddings);
    Var h = g.relu(g.add(g.matmul(x, g.parameter(params, "probe.hidden.w")), g.parameter(params, "probe.hidden.b")));
    return g.add(g.matmul(h, g.parameter(params, "probe.output.w")), g.parameter(params, "probe.output.b"));
}

std::vector<std::int32_t> argmax_rows(const Tensor<float>& logits)
{
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    std::vector<std::int32_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = logits.data() + i * c;
        out[i] = static_cast<std::int32_t>(std::max_element(row, row + c) - row);
    }
    return out;
}

double accuracy(std::span<const std::int32_t> predicted, std::span<const std::int32_t> labels)
{
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
    return labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
}

Tensor<float> uniform(Shape shape, double limit, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<float>(dist(rng));
    return t;
}

}  // namespace

ProbeClassifier train_probe(const Tensor<float>& embeddings, std::span<const std::int32_t> labels,
                            const ProbeConfig& config)
{
    if (embeddings.rank() != 2 || embeddings.dim(0) == 0) {
        throw InvalidArgument("train_probe: embeddings must be a non-empty matrix, got " + to_string(embeddings.shape()));
    }
    if (config.hidden == 0 || config.epochs == 0) throw InvalidArgument("train_probe: hidden and epochs must be positive");
    std::size_t classes = config.classes;
    if (classes == 0) {
        for (auto label : labels) classes = std::max<std::size_t>(classes, static_cast<std::size_t>(std::max(label, 0)) + 1);
    }
    check_labels(labels, classes, embeddings.dim(0));

    ProbeClassifier probe;
    probe.input_dim = embeddings.dim(1);
    probe.classes = classes;
    std::mt19937_64 rng(config.seed);
    const std::size_t d = probe.input_dim, h = config.hidden;
    probe.params.add("probe.hidden.w", uniform({d, h}, std::sqrt(6.0 / static_cast<double>(d + h)), rng));
    probe.params.add("probe.hidden.b", Tensor<float>({h}));
    probe.params.add("probe.output.w", uniform({h, classes}, std::sqrt(6.0 / static_cast<double>(h + classes)), rng));
    probe.params.add("probe.output.b", Tensor<float>({classes}));

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Graph<float> g;
        Var logits = probe_logits(g, probe.params, embeddings);
        Var loss = g.cross_entropy_from_logits(logits, labels);
        g.backward(loss);
        adam_step(probe.params, g.gradients(probe.params), config.learning_rate, static_cast<std::int64_t>(epoch));
        probe.train_accuracy.push_back(evaluate_probe(probe, embeddings, labels));
    }
    return probe;
}

std::vector<std::int32_t> predict_probe(const ProbeClassifier& probe, const Tensor<float>& embeddings)
{
    if (embeddings.rank() != 2 || embeddings.dim(1) != probe.input_dim) {
        throw InvalidArgument("predict_probe: expected [n, " + std::to_string(probe.input_dim) + "], got "
                              + to_string(embeddings.shape()));
    }
    if (embeddings.dim(0) == 0) return {};
    Graph<float> g(false);
    return argmax_rows(g.value(probe_logits(g, probe.params, embeddings)));
}

double evaluate_probe(const ProbeClassifier& probe, const Tensor<float>& embeddings, std::span<const std::int32_t> labels)
{
    check_labels(labels, probe.classes, embeddings.rank() == 2 ? embeddings.dim(0) : 0);
    return accuracy(predict_probe(probe, embeddings), labels);
}

double pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("pearson: need two equal-length series of size >= 2");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson: constant series, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y)
{
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

Correlation correlate(std::span<const double> system, std::span<const double> gold)
{
    if (gold.size() < 2) throw InvalidArgument("sts: need at least 2 pairs");
    if (system.size() != gold.size()) throw InvalidArgument("sts: system and gold sizes differ");
    for (double v : gold) {
        if (!std::isfinite(v)) throw DataError("sts: non-finite gold score");
    }
    if (std::all_of(gold.begin(), gold.end(), [&](double v) { return v == gold[0]; })) {
        throw InvalidArgument("sts: gold scores are constant, correlation undefined");
    }
    return {pearson(system, gold), spearman(system, gold)};
}

std::vector<double> sts_scores(const DualEncoderModel<float>& model, const SubwordVocabulary& vocab,
                               std::span<const StsPair> pairs, std::size_t threads)
{
    std::vector<std::string> a, b;
    for (const auto& p : pairs) {
        a.push_back(p.a);
        b.push_back(p.b);
    }
    const auto ea = embed_texts(model, vocab, a, EmbedMode::sentence, {}, 64, threads);
    const auto eb = embed_texts(model, vocab, b, EmbedMode::sentence, {}, 64, threads);
    std::vector<double> scores(pairs.size());
    const std::size_t d = pairs.empty() ? 0 : ea.dim(1);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        scores[i] = angular_similarity(std::span<const float>(ea.data() + i * d, d), std::span<const float>(eb.data() + i * d, d));
    }
    return scores;
}

Correlation sts_evaluate(const DualEncoderModel<float>& model, const SubwordVocabulary& vocab,
                         std::span<const StsPair> pairs, std::size_t threads)
{
    std::vector<double> gold;
    for (const auto& p : pairs) gold.push_back(p.gold);
    // Validate gold before paying for encoding.
    if (gold.size() >= 2 && std::all_of(gold.begin(), gold.end(), [&](double v) { return v == gold[0]; })) {
        throw InvalidArgument("sts: gold scores are constant, correlation undefined");
    }
    return correlate(sts_scores(model, vocab, pairs, threads), gold);
}

}  // namespace muse
