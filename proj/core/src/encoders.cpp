#include "muse/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace muse {

std::string to_string(Architecture arch)
{
    switch (arch) {
    case Architecture::transformer: return "transformer";
    case Architecture::cnn: return "cnn";
    case Architecture::dan: return "dan";
    }
    return "unknown";
}

Architecture parse_architecture(std::string_view name)
{
    if (name == "transformer") return Architecture::transformer;
    if (name == "cnn") return Architecture::cnn;
    if (name == "dan") return Architecture::dan;
    throw InvalidArgument("unknown architecture '" + std::string(name) + "' (expected transformer, cnn or dan)");
}

EncoderConfig EncoderConfig::desk(Architecture arch, std::size_t vocab_size)
{
    EncoderConfig c;
    c.arch = arch;
    c.vocab_size = vocab_size;
    c.max_len = arch == Architecture::transformer ? 100 : 256;
    return c;
}

EncoderConfig EncoderConfig::paper(Architecture arch, std::size_t vocab_size)
{
    EncoderConfig c;
    c.arch = arch;
    c.vocab_size = vocab_size;
    c.embed_dim = 512;
    c.out_dim = 512;
    c.max_len = arch == Architecture::transformer ? 100 : 256;
    c.transformer = {6, 8, 512, 2048};
    c.cnn = {2, {1, 2, 3, 5}, 256};
    c.dan.hidden_dims = {320, 320, 512};
    c.head_hidden = 512;
    c.nli_hidden = 512;
    return c;
}

void EncoderConfig::validate() const
{
    auto fail = [](const std::string& why) { throw InvalidArgument("encoder config: " + why); };
    if (vocab_size < 2) fail("vocab_size must be >= 2");
    if (embed_dim == 0 || out_dim == 0) fail("dimensions must be positive");
    if (max_len < 1) fail("max_len must be >= 1");
    if (transformer.heads == 0 || transformer.hidden % transformer.heads != 0) {
        fail("transformer hidden size must be divisible by the head count");
    }
    if (transformer.layers == 0 || transformer.filter == 0) fail("transformer layers and filter must be positive");
    if (cnn.filter_widths.empty()) fail("cnn filter_widths must be non-empty");
    if (std::any_of(cnn.filter_widths.begin(), cnn.filter_widths.end(), [](std::size_t w) { return w == 0; })) {
        fail("cnn filter widths must be positive");
    }
    if (cnn.layers == 0 || cnn.filters == 0) fail("cnn layers and filters must be positive");
    if (std::any_of(dan.hidden_dims.begin(), dan.hidden_dims.end(), [](std::size_t d) { return d == 0; })) {
        fail("dan hidden dims must be positive");
    }
    if (head_hidden == 0 || nli_hidden == 0) fail("head sizes must be positive");
}

KeyValueConfig EncoderConfig::to_kv() const
{
    KeyValueConfig kv;
    kv.set("arch", to_string(arch));
    kv.set("vocab_size", std::to_string(vocab_size));
    kv.set("embed_dim", std::to_string(embed_dim));
    kv.set("out_dim", std::to_string(out_dim));
    kv.set("max_len", std::to_string(max_len));
    kv.set("transformer.layers", std::to_string(transformer.layers));
    kv.set("transformer.heads", std::to_string(transformer.heads));
    kv.set("transformer.hidden", std::to_string(transformer.hidden));
    kv.set("transformer.filter", std::to_string(transformer.filter));
    kv.set("cnn.layers", std::to_string(cnn.layers));
    kv.set("cnn.filter_widths", format_size_list(cnn.filter_widths));
    kv.set("cnn.filters", std::to_string(cnn.filters));
    kv.set("dan.hidden_dims", format_size_list(dan.hidden_dims));
    kv.set("head_hidden", std::to_string(head_hidden));
    kv.set("nli_hidden", std::to_string(nli_hidden));
    return kv;
}

EncoderConfig EncoderConfig::from_kv(const KeyValueConfig& kv)
{
    const Architecture arch = parse_architecture(kv.get_string("arch", "transformer"));
    const std::size_t vocab = kv.get_size("vocab_size", 0);
    const std::string preset = kv.get_string("preset", "desk");
    EncoderConfig c;
    if (preset == "desk") {
        c = desk(arch, vocab);
    } else if (preset == "paper") {
        c = paper(arch, vocab);
    } else {
        throw InvalidArgument("unknown encoder preset '" + preset + "'");
    }
    c.embed_dim = kv.get_size("embed_dim", c.embed_dim);
    c.out_dim = kv.get_size("out_dim", c.out_dim);
    c.max_len = kv.get_size("max_len", c.max_len);
    c.transformer.layers = kv.get_size("transformer.layers", c.transformer.layers);
    c.transformer.heads = kv.get_size("transformer.heads", c.transformer.heads);
    c.transformer.hidden = kv.get_size("transformer.hidden", c.transformer.hidden);
    c.transformer.filter = kv.get_size("transformer.filter", c.transformer.filter);
    c.cnn.layers = kv.get_size("cnn.layers", c.cnn.layers);
    c.cnn.filter_widths = kv.get_size_list("cnn.filter_widths", c.cnn.filter_widths);
    c.cnn.filters = kv.get_size("cnn.filters", c.cnn.filters);
    c.dan.hidden_dims = kv.get_size_list("dan.hidden_dims", c.dan.hidden_dims);
    c.head_hidden = kv.get_size("head_hidden", c.head_hidden);
    c.nli_hidden = kv.get_size("nli_hidden", c.nli_hidden);
    return c;
}

namespace {

template <typename Seq>
TokenBatch make_batch_impl(std::span<const Seq> sequences, std::size_t pad_to, auto&& ids_of)
{
    TokenBatch tb;
    tb.batch = sequences.size();
    std::vector<std::size_t> lengths;
    lengths.reserve(sequences.size());
    for (const auto& s : sequences) lengths.push_back(ids_of(s).size());
    tb.length = std::max(pad_to, lengths.empty() ? std::size_t{0} : *std::max_element(lengths.begin(), lengths.end()));
    tb.ids.assign(tb.batch * tb.length, SubwordVocabulary::pad_id);
    for (std::size_t b = 0; b < sequences.size(); ++b) {
        const auto& ids = ids_of(sequences[b]);
        std::copy(ids.begin(), ids.end(), tb.ids.begin() + static_cast<std::ptrdiff_t>(b * tb.length));
    }
    tb.mask = SequenceMask::from_lengths(lengths, tb.length);
    return tb;
}

void check_batch(const EncoderConfig& config, const TokenBatch& batch, const char* who)
{
    if (batch.batch == 0) throw InvalidArgument(std::string(who) + ": empty batch");
    for (std::size_t b = 0; b < batch.batch; ++b) {
        const std::size_t n = batch.mask.count(b);
        if (n == 0) throw InvalidArgument(std::string(who) + ": sequence " + std::to_string(b) + " is empty");
        if (n > config.max_len) {
            throw InvalidArgument(std::string(who) + ": sequence " + std::to_string(b) + " has " + std::to_string(n)
                                  + " tokens, max_len is " + std::to_string(config.max_len));
        }
    }
}

template <typename Real>
class Initializer {
  public:
    explicit Initializer(std::uint64_t seed) : m_rng(seed) {}

    Tensor<Real> glorot(Shape shape, std::size_t fan_in, std::size_t fan_out)
    {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Tensor<Real> t(std::move(shape));
        for (Real& x : t.values()) x = static_cast<Real>(dist(m_rng));
        return t;
    }

    Tensor<Real> normal(Shape shape, double stddev)
    {
        std::normal_distribution<double> dist(0.0, stddev);
        Tensor<Real> t(std::move(shape));
        for (Real& x : t.values()) x = static_cast<Real>(dist(m_rng));
        return t;
    }

  private:
    std::mt19937_64 m_rng;
};

template <typename Real>
void add_dense(ParameterSet<Real>& p, Initializer<Real>& init, const std::string& name, std::size_t in, std::size_t out)
{
    p.add(name + ".w", init.glorot({in, out}, in, out));
    p.add(name + ".b", Tensor<Real>(Shape{out}));
}

template <typename Real>
void add_dan(ParameterSet<Real>& p, Initializer<Real>& init, const EncoderConfig& c, const std::string& scope)
{
    std::size_t in = c.embed_dim;
    for (std::size_t i = 0; i < c.dan.hidden_dims.size(); ++i) {
        add_dense(p, init, scope + ".ff" + std::to_string(i), in, c.dan.hidden_dims[i]);
        in = c.dan.hidden_dims[i];
    }
    add_dense(p, init, scope + ".output", in, c.out_dim);
}

template <typename Real>
Var dense(Graph<Real>& g, const ParameterSet<Real>& p, const std::string& name, Var x)
{
    return g.add(g.matmul(x, g.parameter(p, name + ".w")), g.parameter(p, name + ".b"));
}

template <typename Real>
Var token_embeddings(Graph<Real>& g, const ParameterSet<Real>& p, const TokenBatch& batch)
{
    return g.embedding_lookup(g.parameter(p, "embed.tokens"), batch.ids, batch.batch, batch.length);
}

std::vector<std::vector<std::int32_t>> batch_to_bags(const TokenBatch& batch)
{
    std::vector<std::vector<std::int32_t>> bags(batch.batch);
    for (std::size_t b = 0; b < batch.batch; ++b) {
        for (std::size_t t = 0; t < batch.length; ++t) {
            if (batch.mask.at(b, t)) bags[b].push_back(batch.ids[b * batch.length + t]);
        }
    }
    return bags;
}

}  // namespace

TokenBatch make_token_batch(std::span<const TokenSequence> sequences, std::size_t pad_to)
{
    return make_batch_impl(sequences, pad_to, [](const TokenSequence& s) -> const std::vector<std::int32_t>& { return s.ids; });
}

TokenBatch make_token_batch(std::span<const std::vector<std::int32_t>> sequences, std::size_t pad_to)
{
    return make_batch_impl(sequences, pad_to, [](const std::vector<std::int32_t>& s) -> const std::vector<std::int32_t>& { return s; });
}

template <typename Real>
ParameterSet<Real> init_parameters(const EncoderConfig& c, std::uint64_t seed)
{
    c.validate();
    ParameterSet<Real> p;
    Initializer<Real> init(seed);
    p.add("embed.tokens", init.normal({c.vocab_size, c.embed_dim}, 1.0 / std::sqrt(static_cast<double>(c.embed_dim))));

    switch (c.arch) {
    case Architecture::transformer: {
        const auto& t = c.transformer;
        p.add("embed.positions", init.normal({c.max_len, c.embed_dim}, 1.0 / std::sqrt(static_cast<double>(c.embed_dim))));
        if (c.embed_dim != t.hidden) add_dense(p, init, "transformer.input", c.embed_dim, t.hidden);
        for (std::size_t l = 0; l < t.layers; ++l) {
            const std::string s = "transformer.layer" + std::to_string(l);
            for (const char* proj : {".attn.q", ".attn.k", ".attn.v", ".attn.o"}) add_dense(p, init, s + proj, t.hidden, t.hidden);
            p.add(s + ".ln1.gain", Tensor<Real>(Shape{t.hidden}, Real(1)));
            p.add(s + ".ln1.bias", Tensor<Real>(Shape{t.hidden}));
            add_dense(p, init, s + ".ffn.inner", t.hidden, t.filter);
            add_dense(p, init, s + ".ffn.outer", t.filter, t.hidden);
            p.add(s + ".ln2.gain", Tensor<Real>(Shape{t.hidden}, Real(1)));
            p.add(s + ".ln2.bias", Tensor<Real>(Shape{t.hidden}));
        }
        add_dense(p, init, "transformer.output", t.hidden, c.out_dim);
        break;
    }
    case Architecture::cnn: {
        std::size_t in = c.embed_dim;
        for (std::size_t l = 0; l < c.cnn.layers; ++l) {
            for (std::size_t w : c.cnn.filter_widths) {
                const std::string s = "cnn.layer" + std::to_string(l) + ".width" + std::to_string(w);
                p.add(s + ".w", init.glorot({w, in, c.cnn.filters}, w * in, c.cnn.filters));
                p.add(s + ".b", Tensor<Real>(Shape{c.cnn.filters}));
            }
            in = c.cnn.filters * c.cnn.filter_widths.size();
        }
        add_dense(p, init, "cnn.ff.hidden", in, c.out_dim);
        add_dense(p, init, "cnn.ff.output", c.out_dim, c.out_dim);
        break;
    }
    case Architecture::dan:
        add_dan(p, init, c, "dan");
        break;
    }

    add_dan(p, init, c, "context");
    add_dense(p, init, "head.qa_question.hidden", c.out_dim, c.head_hidden);
    add_dense(p, init, "head.qa_question.output", c.head_hidden, c.out_dim);
    add_dense(p, init, "head.qa_response.hidden", 2 * c.out_dim, c.head_hidden);
    add_dense(p, init, "head.qa_response.output", c.head_hidden, c.out_dim);
    add_dense(p, init, "head.nli.hidden", 4 * c.out_dim, c.nli_hidden);
    add_dense(p, init, "head.nli.output", c.nli_hidden, 3);
    return p;
}

template <typename Real>
Var encode_transformer(Graph<Real>& g, const EncoderConfig& c, const ParameterSet<Real>& p, const TokenBatch& batch)
{
    if (c.arch != Architecture::transformer) throw InvalidArgument("encode_transformer: config is " + to_string(c.arch));
    check_batch(c, batch, "encode_transformer");
    const auto& t = c.transformer;

    // Positions beyond max_len only ever hold padding; clamp so the lookup
    // stays in range when a batch is padded past max_len.
    std::vector<std::int32_t> positions(batch.batch * batch.length);
    for (std::size_t b = 0; b < batch.batch; ++b) {
        for (std::size_t i = 0; i < batch.length; ++i) {
            positions[b * batch.length + i] = static_cast<std::int32_t>(std::min(i, c.max_len - 1));
        }
    }
    Var x = g.add(token_embeddings(g, p, batch),
                  g.embedding_lookup(g.parameter(p, "embed.positions"), positions, batch.batch, batch.length));
    if (c.embed_dim != t.hidden) x = dense(g, p, "transformer.input", x);

    for (std::size_t l = 0; l < t.layers; ++l) {
        const std::string s = "transformer.layer" + std::to_string(l);
        Var q = dense(g, p, s + ".attn.q", x);
        Var k = dense(g, p, s + ".attn.k", x);
        Var v = dense(g, p, s + ".attn.v", x);
        Var attended = dense(g, p, s + ".attn.o", g.scaled_dot_attention(q, k, v, batch.mask, t.heads));
        x = g.layer_norm(g.add(x, attended), g.parameter(p, s + ".ln1.gain"), g.parameter(p, s + ".ln1.bias"));
        Var ff = dense(g, p, s + ".ffn.outer", g.relu(dense(g, p, s + ".ffn.inner", x)));
        x = g.layer_norm(g.add(x, ff), g.parameter(p, s + ".ln2.gain"), g.parameter(p, s + ".ln2.bias"));
    }
    return dense(g, p, "transformer.output", g.masked_mean_pool(x, batch.mask));
}

template <typename Real>
Var encode_cnn(Graph<Real>& g, const EncoderConfig& c, const ParameterSet<Real>& p, const TokenBatch& batch)
{
    if (c.arch != Architecture::cnn) throw InvalidArgument("encode_cnn: config is " + to_string(c.arch));
    check_batch(c, batch, "encode_cnn");
    Var x = token_embeddings(g, p, batch);
    for (std::size_t l = 0; l < c.cnn.layers; ++l) {
        std::vector<Var> maps;
        for (std::size_t w : c.cnn.filter_widths) {
            const std::string s = "cnn.layer" + std::to_string(l) + ".width" + std::to_string(w);
            maps.push_back(g.relu(g.conv1d(x, g.parameter(p, s + ".w"), g.parameter(p, s + ".b"), batch.mask)));
        }
        x = maps.size() == 1 ? maps.front() : g.concat(maps);
    }
    Var pooled = g.masked_mean_pool(x, batch.mask);
    return dense(g, p, "cnn.ff.output", g.relu(dense(g, p, "cnn.ff.hidden", pooled)));
}

template <typename Real>
Var encode_dan(Graph<Real>& g, const EncoderConfig& c, const ParameterSet<Real>& p,
               std::span<const std::vector<std::int32_t>> bags, const std::string& scope)
{
    if (bags.empty()) throw InvalidArgument("encode_dan: empty batch");
    std::vector<std::vector<std::int32_t>> sorted(bags.begin(), bags.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i].empty()) throw InvalidArgument("encode_dan: bag " + std::to_string(i) + " is empty");
        std::sort(sorted[i].begin(), sorted[i].end());
    }
    const TokenBatch batch = make_token_batch(std::span<const std::vector<std::int32_t>>(sorted));
    Var x = g.masked_mean_pool(token_embeddings(g, p, batch), batch.mask);
    for (std::size_t i = 0; i < c.dan.hidden_dims.size(); ++i) {
        x = g.relu(dense(g, p, scope + ".ff" + std::to_string(i), x));
    }
    return dense(g, p, scope + ".output", x);
}

template <typename Real>
Var encode_sentences(Graph<Real>& g, const EncoderConfig& c, const ParameterSet<Real>& p, const TokenBatch& batch)
{
    switch (c.arch) {
    case Architecture::transformer: return encode_transformer(g, c, p, batch);
    case Architecture::cnn: return encode_cnn(g, c, p, batch);
    case Architecture::dan: {
        check_batch(c, batch, "encode_dan");
        const auto bags = batch_to_bags(batch);
        return encode_dan(g, c, p, std::span<const std::vector<std::int32_t>>(bags), "dan");
    }
    }
    throw InvalidArgument("encode_sentences: unknown architecture");
}

template <typename Real>
Var apply_task_head(Graph<Real>& g, TaskHead head, const ParameterSet<Real>& p, std::span<const Var> inputs)
{
    auto expect = [&](std::size_t n, const char* name) {
        if (inputs.size() != n) {
            throw InvalidArgument(std::string("apply_task_head(") + name + "): expected " + std::to_string(n)
                                  + " inputs, got " + std::to_string(inputs.size()));
        }
    };
    switch (head) {
    case TaskHead::qa_question: {
        expect(1, "qa_question");
        return dense(g, p, "head.qa_question.output", g.relu(dense(g, p, "head.qa_question.hidden", inputs[0])));
    }
    case TaskHead::qa_response: {
        expect(2, "qa_response");
        const Var parts[] = {inputs[0], inputs[1]};
        Var joined = g.concat(parts);
        return dense(g, p, "head.qa_response.output", g.relu(dense(g, p, "head.qa_response.hidden", joined)));
    }
    case TaskHead::nli: {
        expect(2, "nli");
        const Var u = inputs[0], v = inputs[1];
        const Var features[] = {u, v, g.abs(g.subtract(u, v)), g.multiply(u, v)};
        Var joined = g.concat(features);
        return dense(g, p, "head.nli.output", g.relu(dense(g, p, "head.nli.hidden", joined)));
    }
    }
    throw InvalidArgument("apply_task_head: unknown head");
}

#define MUSE_INSTANTIATE_ENCODERS(Real)                                                                              \
    template ParameterSet<Real> init_parameters<Real>(const EncoderConfig&, std::uint64_t);                         \
    template Var encode_transformer<Real>(Graph<Real>&, const EncoderConfig&, const ParameterSet<Real>&,            \
                                          const TokenBatch&);                                                         \
    template Var encode_cnn<Real>(Graph<Real>&, const EncoderConfig&, const ParameterSet<Real>&, const TokenBatch&); \
    template Var encode_dan<Real>(Graph<Real>&, const EncoderConfig&, const ParameterSet<Real>&,                    \
                                  std::span<const std::vector<std::int32_t>>, const std::string&);                   \
    template Var encode_sentences<Real>(Graph<Real>&, const EncoderConfig&, const ParameterSet<Real>&,              \
                                        const TokenBatch&);                                                           \
    template Var apply_task_head<Real>(Graph<Real>&, TaskHead, const ParameterSet<Real>&, std::span<const Var>);

MUSE_INSTANTIATE_ENCODERS(float)
MUSE_INSTANTIATE_ENCODERS(double)

}  // namespace muse
