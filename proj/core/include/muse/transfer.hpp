#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "muse/multitask.hpp"
#include "muse/tensor.hpp"

namespace muse {

struct ProbeConfig {
    std::size_t hidden = 64;
    std::size_t epochs = 200;
    double learning_rate = 1e-2;
    std::uint64_t seed = 1;
    /// 0 = one more than the largest training label.
    std::size_t classes = 0;
};

/// One-hidden-layer MLP over fixed sentence embeddings.
struct ProbeClassifier {
    std::size_t input_dim = 0;
    std::size_t classes = 0;
    ParameterSet<float> params;
    /// Training-set accuracy after each epoch.
    std::vector<double> train_accuracy;
};

/// Full-batch Adam on cross-entropy. The embeddings are plain inputs, so no
/// gradient can reach whichever encoder produced them.
ProbeClassifier train_probe(const Tensor<float>& embeddings, std::span<const std::int32_t> labels,
                            const ProbeConfig& config);

std::vector<std::int32_t> predict_probe(const ProbeClassifier& probe, const Tensor<float>& embeddings);
double evaluate_probe(const ProbeClassifier& probe, const Tensor<float>& embeddings,
                      std::span<const std::int32_t> labels);

double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson over average ranks (ties share the mean of their positions).
double spearman(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> values);

struct StsPair {
    std::string a;
    std::string b;
    double gold = 0.0;
};

struct Correlation {
    double pearson = 0.0;
    double spearman = 0.0;
};

/// Correlation of system scores against gold; errors when gold is constant.
Correlation correlate(std::span<const double> system, std::span<const double> gold);

/// Scores each pair by angular similarity of the two sentence embeddings.
std::vector<double> sts_scores(const DualEncoderModel<float>& model, const SubwordVocabulary& vocab,
                               std::span<const StsPair> pairs, std::size_t threads = 1);

Correlation sts_evaluate(const DualEncoderModel<float>& model, const SubwordVocabulary& vocab,
                         std::span<const StsPair> pairs, std::size_t threads = 1);

}  // namespace muse
