#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "muse/autograd.hpp"
#include "muse/kv_config.hpp"
#include "muse/subword.hpp"

namespace muse {

enum class Architecture { transformer, cnn, dan };

std::string to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

struct TransformerConfig {
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t hidden = 64;
    std::size_t filter = 128;
};

struct CnnConfig {
    std::size_t layers = 2;
    std::vector<std::size_t> filter_widths = {1, 2, 3, 5};
    std::size_t filters = 32;
};

struct DanConfig {
    std::vector<std::size_t> hidden_dims = {64};
};

/// Architecture hyperparameters. The DAN settings serve both the `dan`
/// sentence encoder and the bag-of-words context encoder of the QA response
/// tower.
struct EncoderConfig {
    Architecture arch = Architecture::transformer;
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 64;
    std::size_t out_dim = 64;
    std::size_t max_len = 100;
    TransformerConfig transformer;
    CnnConfig cnn;
    DanConfig dan;
    std::size_t head_hidden = 64;
    std::size_t nli_hidden = 64;

    /// Small defaults that train in minutes on one core.
    static EncoderConfig desk(Architecture arch, std::size_t vocab_size);
    /// Published layer sizes (6x8x512x2048 transformer; 2-layer CNN with
    /// widths {1,2,3,5} and 256 filters). Intended for shape checks.
    static EncoderConfig paper(Architecture arch, std::size_t vocab_size);

    void validate() const;

    [[nodiscard]] KeyValueConfig to_kv() const;
    /// Reads `preset` (desk|paper) first, then explicit keys override it.
    static EncoderConfig from_kv(const KeyValueConfig& kv);
};

/// Padded [batch, length] block of token ids with its validity mask.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<std::int32_t> ids;
    SequenceMask mask;
};

/// Left-aligns sequences and pads with pad_id to the longest one (or to
/// `pad_to` when that is longer).
TokenBatch make_token_batch(std::span<const TokenSequence> sequences, std::size_t pad_to = 0);
TokenBatch make_token_batch(std::span<const std::vector<std::int32_t>> sequences, std::size_t pad_to = 0);

template <typename Real>
ParameterSet<Real> init_parameters(const EncoderConfig& config, std::uint64_t seed);

/// Token + learned position embeddings, post-norm self-attention blocks,
/// masked mean pooling, linear projection to out_dim. Returns [batch, out_dim].
template <typename Real>
Var encode_transformer(Graph<Real>& g, const EncoderConfig& config, const ParameterSet<Real>& params,
                       const TokenBatch& batch);

/// Per layer, ReLU same-padded convolutions at every filter width,
/// concatenated; then masked mean pooling and a feed-forward stack.
template <typename Real>
Var encode_cnn(Graph<Real>& g, const EncoderConfig& config, const ParameterSet<Real>& params, const TokenBatch& batch);

/// Mean of the bag's token embeddings through a ReLU feed-forward stack.
/// Bags are summed in ascending id order, so permutations give identical
/// results. `scope` selects the parameter family ("dan" or "context").
template <typename Real>
Var encode_dan(Graph<Real>& g, const EncoderConfig& config, const ParameterSet<Real>& params,
               std::span<const std::vector<std::int32_t>> bags, const std::string& scope = "dan");

/// Dispatches on config.arch. The dan architecture treats each sequence as a bag.
template <typename Real>
Var encode_sentences(Graph<Real>& g, const EncoderConfig& config, const ParameterSet<Real>& params,
                     const TokenBatch& batch);

enum class TaskHead { qa_question, qa_response, nli };

/// qa_question: inputs = {question}. qa_response: inputs = {answer, context}.
/// nli: inputs = {premise, hypothesis}; returns [batch, 3] logits.
template <typename Real>
Var apply_task_head(Graph<Real>& g, TaskHead head, const ParameterSet<Real>& params, std::span<const Var> inputs);

}  // namespace muse
