#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "muse/bench.hpp"
#include "muse/embedding.hpp"
#include "muse/evaluation.hpp"
#include "muse/model_io.hpp"
#include "muse/synthetic.hpp"
#include "muse/text_io.hpp"
#include "muse/transfer.hpp"

namespace muse::cli {

namespace {

struct ModelArgs {
    std::string checkpoint;
    std::string vocab;
};

struct Loaded {
    DualEncoderModel<float> model;
    SubwordVocabulary vocab;
};

Loaded load(const ModelArgs& args)
{
    if (args.checkpoint.empty() || args.vocab.empty()) throw InvalidArgument("--checkpoint and --vocab are required");
    Loaded l{load_model(args.checkpoint), SubwordVocabulary::load(args.vocab)};
    if (l.vocab.size() != l.model.config.vocab_size) {
        throw DataError(args.vocab + ": vocabulary has " + std::to_string(l.vocab.size()) + " pieces but "
                        + args.checkpoint + " was trained with " + std::to_string(l.model.config.vocab_size));
    }
    return l;
}

void add_model_options(CLI::App* cmd, ModelArgs& args)
{
    cmd->add_option("--checkpoint", args.checkpoint, "model checkpoint")->check(CLI::ExistingFile);
    cmd->add_option("--vocab", args.vocab, "subword vocabulary file")->check(CLI::ExistingFile);
}

EmbedMode parse_mode(const std::string& name)
{
    if (name == "sentence") return EmbedMode::sentence;
    if (name == "question") return EmbedMode::question;
    if (name == "response") return EmbedMode::response;
    throw InvalidArgument("unknown mode '" + name + "' (expected sentence, question or response)");
}

/// Shared tail of every eval-* command.
struct EvalArgs {
    ModelArgs model;
    bool bm25 = false;
    std::string metric = "dot";
    std::size_t threads = 1;
    std::string metrics_path;
    std::string results_path;
    std::string save_task_path;
    std::string translations;
    std::string query_lang = "xx";
    std::string backtranslations;
    double bt_threshold = 0.5;
};

void add_eval_options(CLI::App* cmd, EvalArgs& args)
{
    add_model_options(cmd, args.model);
    cmd->add_flag("--bm25", args.bm25, "rank with BM25 instead of a model");
    cmd->add_option("--metric", args.metric, "dense similarity: dot or angular")->capture_default_str();
    cmd->add_option("--threads", args.threads, "encoding and search workers")->capture_default_str();
    cmd->add_option("--metrics", args.metrics_path, "metrics JSON output")->required();
    cmd->add_option("--results", args.results_path, "results TSV output")->required();
    cmd->add_option("--save-task", args.save_task_path, "write the constructed task spec as JSON");
    cmd->add_option("--translations", args.translations, "query_id<TAB>text file replacing query texts");
    cmd->add_option("--query-lang", args.query_lang, "language code of the translated queries")->capture_default_str();
    cmd->add_option("--backtranslations", args.backtranslations,
                    "query_id<TAB>text back-translations; drops queries below --bt-threshold cosine");
    cmd->add_option("--bt-threshold", args.bt_threshold)->capture_default_str();
}

/// Applies the cross-lingual options, then drops back-translation failures.
RetrievalTaskSpec cross_lingual(RetrievalTaskSpec task, const EvalArgs& args, const Loaded* loaded, std::ostream& out)
{
    if (args.translations.empty()) {
        if (!args.backtranslations.empty()) throw InvalidArgument("--backtranslations needs --translations");
        return task;
    }
    const auto original = task;
    task = make_cross_lingual(task, io::read_id_text_map(args.translations), args.query_lang);
    if (args.backtranslations.empty()) return task;
    if (!loaded) throw InvalidArgument("--backtranslations needs a model to compare embeddings");
    const auto back = io::read_id_text_map(args.backtranslations);
    std::map<std::string, std::string> original_text;
    for (const auto& q : original.queries) original_text[q.id] = q.text;
    std::vector<std::string> a, b;
    for (const auto& q : task.queries) {
        auto it = back.find(q.id);
        if (it == back.end()) throw DataError(args.backtranslations + ": no back-translation for query '" + q.id + "'");
        a.push_back(original_text.at(q.id));
        b.push_back(it->second);
    }
    const auto ea = embed_texts(loaded->model, loaded->vocab, a, EmbedMode::sentence, {}, 64, args.threads);
    const auto eb = embed_texts(loaded->model, loaded->vocab, b, EmbedMode::sentence, {}, 64, args.threads);
    const auto keep = backtranslation_filter(ea, eb, args.bt_threshold);
    RetrievalTaskSpec filtered = task;
    filtered.queries.clear();
    filtered.relevance.clear();
    for (std::size_t i = 0; i < task.queries.size(); ++i) {
        if (!keep[i]) continue;
        filtered.queries.push_back(task.queries[i]);
        filtered.relevance[task.queries[i].id] = task.relevance.at(task.queries[i].id);
    }
    out << "back-translation filter kept " << filtered.queries.size() << " of " << task.queries.size() << " queries\n";
    return filtered;
}

TaskResults rank(const RetrievalTaskSpec& task, const EvalArgs& args, const Loaded* loaded, const EncodeModes& modes,
                 std::size_t k)
{
    if (args.bm25) return bm25_search(task, k);
    const auto embeddings = embed_task(loaded->model, loaded->vocab, task, modes, args.threads);
    return dense_search(task, embeddings, k, parse_metric(args.metric), args.threads);
}

void report(const EvalArgs& args, const TaskResults& results, const std::vector<io::MetricRecord>& records,
            std::ostream& out)
{
    io::write_results(args.results_path, results);
    io::write_metrics(args.metrics_path, records);
    for (const auto& r : records) out << r.task << ' ' << r.metric << ' ' << io::format_real(r.value) << " (" << r.n_queries << " queries)\n";
}

std::optional<Loaded> maybe_load(const EvalArgs& args)
{
    if (args.bm25 && args.backtranslations.empty()) return std::nullopt;
    return load(args.model);
}

std::vector<std::size_t> parse_lengths(const std::string& text)
{
    try {
        return parse_size_list(text);
    } catch (const Error& e) {
        throw InvalidArgument(std::string("--lengths: ") + e.what());
    }
}

void write_jsonl(const std::string& path, const std::vector<TrainingExample>& examples)
{
    std::string text;
    for (const auto& ex : examples) text += to_jsonl(ex) + "\n";
    io::write_file(path, text);
}

void write_lines(const std::string& path, const std::vector<std::string>& lines)
{
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    io::write_file(path, text);
}

void gen_toy(const std::string& kind, const std::string& dir, std::size_t count, std::uint64_t seed, double dev_fraction,
             std::ostream& out)
{
    std::filesystem::create_directories(dir);
    const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
    if (kind == "bitext") {
        const auto pairs = synthetic::cipher_bitext(count, seed);
        const auto n_train = static_cast<std::size_t>(std::llround((1.0 - dev_fraction) * static_cast<double>(count)));
        std::vector<TrainingExample> train;
        std::vector<std::string> corpus;
        std::string heldout;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (i < n_train) {
                TrainingExample ex;
                ex.source = pairs[i].first;
                ex.target = pairs[i].second;
                ex.lang_pair = "xx-yy";
                train.push_back(std::move(ex));
                corpus.push_back(pairs[i].first);
                corpus.push_back(pairs[i].second);
            } else {
                heldout += pairs[i].first + '\t' + pairs[i].second + '\n';
            }
        }
        write_jsonl(path("train.jsonl"), train);
        write_lines(path("corpus.txt"), corpus);
        io::write_file(path("heldout.tsv"), heldout);
        out << "wrote " << train.size() << " training pairs and " << pairs.size() - n_train << " held-out pairs\n";
    } else if (kind == "qa") {
        const auto paragraphs = synthetic::qa_corpus(count, seed);
        std::vector<std::pair<std::size_t, std::size_t>> refs;
        for (std::size_t p = 0; p < paragraphs.size(); ++p) {
            for (std::size_t q = 0; q < paragraphs[p].questions.size(); ++q) refs.emplace_back(p, q);
        }
        auto [train_refs, dev_refs] = split_train_dev(refs, 1.0 - dev_fraction, seed);
        std::vector<TrainingExample> train;
        std::vector<std::string> corpus;
        for (auto [p, q] : train_refs) {
            TrainingExample ex;
            ex.task = Task::qa;
            ex.source = paragraphs[p].questions[q].text;
            ex.target = paragraphs[p].sentences[paragraphs[p].questions[q].sentence];
            ex.context = paragraphs[p].text();
            ex.lang_pair = "en-en";
            train.push_back(std::move(ex));
        }
        const std::set<std::pair<std::size_t, std::size_t>> dev(dev_refs.begin(), dev_refs.end());
        nlohmann::ordered_json squad_paragraphs = nlohmann::ordered_json::array();
        for (std::size_t p = 0; p < paragraphs.size(); ++p) {
            const auto& para = paragraphs[p];
            for (const auto& s : para.sentences) corpus.push_back(s);
            for (const auto& q : para.questions) corpus.push_back(q.text);
            const std::string context = para.text();
            nlohmann::ordered_json qas = nlohmann::ordered_json::array();
            for (std::size_t q = 0; q < para.questions.size(); ++q) {
                if (!dev.count({p, q})) continue;
                const auto& sentence = para.sentences[para.questions[q].sentence];
                // Toy text is ASCII, so byte offsets are code point offsets.
                const auto start = context.find(sentence);
                qas.push_back({{"id", "q" + std::to_string(p) + "." + std::to_string(q)},
                               {"question", para.questions[q].text},
                               {"answers", {{{"text", sentence}, {"answer_start", start}}}}});
            }
            squad_paragraphs.push_back({{"context", context}, {"qas", std::move(qas)}});
        }
        nlohmann::ordered_json squad = {{"version", "toy"},
                                        {"data", {{{"title", "toy"}, {"paragraphs", std::move(squad_paragraphs)}}}}};
        write_jsonl(path("train.jsonl"), train);
        write_lines(path("corpus.txt"), corpus);
        io::write_file(path("dev_squad.json"), squad.dump(1) + "\n");
        out << "wrote " << train.size() << " training questions and " << dev_refs.size() << " dev questions\n";
    } else if (kind == "multilingual") {
        const auto lines = synthetic::multilingual_corpus(count, seed);
        const auto n_train = static_cast<std::size_t>(std::llround((1.0 - dev_fraction) * static_cast<double>(lines.size())));
        std::vector<std::string> train, heldout;
        for (std::size_t i = 0; i < lines.size(); ++i) (i < n_train ? train : heldout).push_back(lines[i].text);
        write_lines(path("corpus.txt"), train);
        write_lines(path("heldout.txt"), heldout);
        out << "wrote " << train.size() << " training lines and " << heldout.size() << " held-out lines\n";
    } else {
        throw InvalidArgument("unknown toy corpus '" + kind + "' (expected bitext, qa or multilingual)");
    }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"muse: multilingual sentence encoders for retrieval"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // train-vocab
    std::vector<std::string> tv_corpus;
    std::string tv_output, tv_sample;
    std::size_t tv_size = 8000;
    double tv_coverage = 0.9995;
    auto* train_vocab_cmd = app.add_subcommand("train-vocab", "train a subword vocabulary on text lines");
    train_vocab_cmd->add_option("--corpus", tv_corpus, "text file, one sentence per line")->required()->check(CLI::ExistingFile);
    train_vocab_cmd->add_option("--output", tv_output, "vocabulary file")->required();
    train_vocab_cmd->add_option("--size", tv_size, "target number of pieces")->capture_default_str();
    train_vocab_cmd->add_option("--coverage", tv_coverage, "character coverage in (0, 1]")->capture_default_str();
    train_vocab_cmd->add_option("--heldout", tv_sample, "report coverage on these lines too")->check(CLI::ExistingFile);

    // train
    std::vector<std::string> tr_data;
    std::string tr_vocab, tr_output, tr_config, tr_loss_log;
    std::vector<std::string> tr_set;
    auto* train_cmd = app.add_subcommand("train", "train a dual encoder on qa/translation/nli examples");
    train_cmd->add_option("--data", tr_data, "JSONL training examples")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--vocab", tr_vocab, "subword vocabulary")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--output", tr_output, "checkpoint to write")->required();
    train_cmd->add_option("--config", tr_config, "key=value config file")->check(CLI::ExistingFile);
    train_cmd->add_option("--set", tr_set, "key=value override (repeatable)");
    train_cmd->add_option("--loss-log", tr_loss_log, "write step<TAB>task<TAB>loss lines");

    // encode
    ModelArgs enc_model;
    std::string enc_input, enc_output, enc_mode = "sentence", enc_contexts;
    std::size_t enc_threads = 1, enc_batch = 64;
    auto* encode_cmd = app.add_subcommand("encode", "embed id<TAB>text lines");
    add_model_options(encode_cmd, enc_model);
    encode_cmd->add_option("--input", enc_input, "id<TAB>text file")->required()->check(CLI::ExistingFile);
    encode_cmd->add_option("--output", enc_output, "embedding file")->required();
    encode_cmd->add_option("--mode", enc_mode, "sentence, question or response")->capture_default_str();
    encode_cmd->add_option("--contexts", enc_contexts, "id<TAB>context file for response mode")->check(CLI::ExistingFile);
    encode_cmd->add_option("--threads", enc_threads)->capture_default_str();
    encode_cmd->add_option("--batch-size", enc_batch)->capture_default_str();

    // index
    std::string ix_input, ix_output;
    auto* index_cmd = app.add_subcommand("index", "validate embeddings and write a search index");
    index_cmd->add_option("--embeddings", ix_input, "embedding file")->required()->check(CLI::ExistingFile);
    index_cmd->add_option("--output", ix_output, "index file")->required();

    // search
    ModelArgs se_model;
    std::string se_index, se_queries, se_query_embeddings, se_output, se_mode = "sentence", se_metric = "dot";
    std::size_t se_k = 10, se_threads = 1;
    auto* search_cmd = app.add_subcommand("search", "exact top-k search over an index");
    add_model_options(search_cmd, se_model);
    search_cmd->add_option("--index", se_index, "index file")->required()->check(CLI::ExistingFile);
    search_cmd->add_option("--queries", se_queries, "id<TAB>text queries (encoded with the model)")->check(CLI::ExistingFile);
    search_cmd->add_option("--query-embeddings", se_query_embeddings, "pre-computed query embeddings")->check(CLI::ExistingFile);
    search_cmd->add_option("--output", se_output, "results TSV")->required();
    search_cmd->add_option("--mode", se_mode, "query encoding mode")->capture_default_str();
    search_cmd->add_option("--metric", se_metric, "dot or angular")->capture_default_str();
    search_cmd->add_option("-k,--k", se_k, "results per query")->capture_default_str();
    search_cmd->add_option("--threads", se_threads)->capture_default_str();

    // eval-sr
    EvalArgs sr;
    std::string sr_task, sr_pairs, sr_texts;
    std::size_t sr_cutoff = 100;
    auto* eval_sr_cmd = app.add_subcommand("eval-sr", "semantic retrieval, MAP@100");
    add_eval_options(eval_sr_cmd, sr);
    eval_sr_cmd->add_option("--task", sr_task, "task spec JSON")->check(CLI::ExistingFile);
    eval_sr_cmd->add_option("--pairs", sr_pairs, "positive pairs id1<TAB>id2")->check(CLI::ExistingFile);
    eval_sr_cmd->add_option("--texts", sr_texts, "id<TAB>text for every sentence")->check(CLI::ExistingFile);
    eval_sr_cmd->add_option("--cutoff", sr_cutoff)->capture_default_str();

    // eval-bitext
    EvalArgs bt;
    std::string bt_task, bt_parallel, bt_direction = "source-to-target", bt_lang = "xx-yy";
    auto* eval_bitext_cmd = app.add_subcommand("eval-bitext", "bitext retrieval, P@1");
    add_eval_options(eval_bitext_cmd, bt);
    eval_bitext_cmd->add_option("--task", bt_task, "task spec JSON")->check(CLI::ExistingFile);
    eval_bitext_cmd->add_option("--parallel", bt_parallel, "source<TAB>target file")->check(CLI::ExistingFile);
    eval_bitext_cmd->add_option("--direction", bt_direction, "source-to-target or target-to-source")->capture_default_str();
    eval_bitext_cmd->add_option("--lang-pair", bt_lang)->capture_default_str();

    // eval-reqa
    EvalArgs rq;
    std::string rq_squad, rq_level = "sentence";
    bool rq_no_context = false;
    auto* eval_reqa_cmd = app.add_subcommand("eval-reqa", "retrieval question answering over SQuAD-format data, P@1");
    add_eval_options(eval_reqa_cmd, rq);
    eval_reqa_cmd->add_option("--squad", rq_squad, "SQuAD v1.0 JSON")->required()->check(CLI::ExistingFile);
    eval_reqa_cmd->add_option("--level", rq_level, "sentence or paragraph")->capture_default_str();
    eval_reqa_cmd->add_flag("--no-context", rq_no_context, "encode candidate sentences without their paragraph");

    // eval-sts
    ModelArgs sts_model;
    std::string sts_data, sts_metrics, sts_results;
    std::size_t sts_threads = 1;
    auto* eval_sts_cmd = app.add_subcommand("eval-sts", "STS correlation with angular similarity");
    add_model_options(eval_sts_cmd, sts_model);
    eval_sts_cmd->add_option("--data", sts_data, "score<TAB>a<TAB>b file")->required()->check(CLI::ExistingFile);
    eval_sts_cmd->add_option("--metrics", sts_metrics)->required();
    eval_sts_cmd->add_option("--results", sts_results)->required();
    eval_sts_cmd->add_option("--threads", sts_threads)->capture_default_str();

    // probe
    ModelArgs pr_model;
    std::string pr_train, pr_test, pr_metrics;
    ProbeConfig pr_config;
    auto* probe_cmd = app.add_subcommand("probe", "train a classifier on frozen sentence embeddings");
    add_model_options(probe_cmd, pr_model);
    probe_cmd->add_option("--train", pr_train, "label<TAB>text training file")->required()->check(CLI::ExistingFile);
    probe_cmd->add_option("--test", pr_test, "label<TAB>text test file")->required()->check(CLI::ExistingFile);
    probe_cmd->add_option("--metrics", pr_metrics, "metrics JSON output")->required();
    probe_cmd->add_option("--hidden", pr_config.hidden)->capture_default_str();
    probe_cmd->add_option("--epochs", pr_config.epochs)->capture_default_str();
    probe_cmd->add_option("--lr", pr_config.learning_rate)->capture_default_str();
    probe_cmd->add_option("--seed", pr_config.seed)->capture_default_str();

    // bench
    std::vector<std::string> be_checkpoints;
    std::string be_arch = "transformer,cnn", be_lengths = "8,16,32,64,128", be_output;
    std::size_t be_vocab_size = 8000;
    BenchOptions be_options;
    auto* bench_cmd = app.add_subcommand("bench", "time forward passes per architecture and sentence length");
    bench_cmd->add_option("--checkpoint", be_checkpoints, "checkpoints to time (default: random desk models)")
        ->check(CLI::ExistingFile);
    bench_cmd->add_option("--arch", be_arch, "architectures for random models")->capture_default_str();
    bench_cmd->add_option("--vocab-size", be_vocab_size, "vocabulary size for random models")->capture_default_str();
    bench_cmd->add_option("--lengths", be_lengths)->capture_default_str();
    bench_cmd->add_option("--batch", be_options.batch)->capture_default_str();
    bench_cmd->add_option("--repeats", be_options.repeats)->capture_default_str();
    bench_cmd->add_option("--seed", be_options.seed)->capture_default_str();
    bench_cmd->add_option("--output", be_output, "report JSON");

    // gen-toy
    std::string gt_kind, gt_dir;
    std::size_t gt_count = 0;
    std::uint64_t gt_seed = 7;
    double gt_dev = 0.1;
    auto* gen_toy_cmd = app.add_subcommand("gen-toy", "write a synthetic corpus (bitext, qa or multilingual)");
    gen_toy_cmd->add_option("kind", gt_kind)->required();
    gen_toy_cmd->add_option("--output-dir", gt_dir)->required();
    gen_toy_cmd->add_option("--count", gt_count, "pairs, entities or lines per language");
    gen_toy_cmd->add_option("--seed", gt_seed)->capture_default_str();
    gen_toy_cmd->add_option("--dev-fraction", gt_dev)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage;
    }

    try {
        if (*train_vocab_cmd) {
            std::vector<std::string> lines;
            for (const auto& path : tv_corpus) {
                auto more = io::read_lines(path);
                lines.insert(lines.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
            }
            if (lines.empty()) throw DataError("train-vocab: corpus is empty");
            const auto vocab = train_vocab(lines, tv_size, tv_coverage);
            vocab.save(tv_output);
            out << "pieces " << vocab.size() << "\ntraining coverage " << io::format_real(character_coverage(vocab, lines)) << "\n";
            if (!tv_sample.empty()) {
                out << "held-out coverage " << io::format_real(character_coverage(vocab, io::read_lines(tv_sample))) << "\n";
            }
        } else if (*train_cmd) {
            KeyValueConfig kv;
            if (!tr_config.empty()) kv = KeyValueConfig::load(tr_config);
            std::string overrides;
            for (const auto& s : tr_set) overrides += s + "\n";
            kv.merge(KeyValueConfig::parse(overrides, "--set"));
            const auto vocab = SubwordVocabulary::load(tr_vocab);
            kv.set("vocab_size", std::to_string(vocab.size()));
            const auto config = EncoderConfig::from_kv(kv);
            config.validate();

            std::vector<TrainingExample> examples;
            for (const auto& path : tr_data) {
                auto more = load_training_jsonl(path);
                examples.insert(examples.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
            }
            TrainOptions options;
            options.steps = kv.get_size("steps", 1000);
            options.batch_size = kv.get_size("batch_size", 32);
            options.learning_rate = kv.get_double("lr", 1e-3);
            options.seed = kv.get_size("seed", 1);
            std::string loss_log;
            options.on_step = [&](std::int64_t step, Task task, double loss) {
                loss_log += std::to_string(step) + '\t' + to_string(task) + '\t' + io::format_real(loss) + '\n';
            };
            const auto state = train(make_model<float>(config, options.seed), vocab, group_by_task(examples), options);

            KeyValueConfig extra;
            extra.set("steps", std::to_string(options.steps));
            extra.set("batch_size", std::to_string(options.batch_size));
            extra.set("lr", io::format_real(options.learning_rate));
            extra.set("seed", std::to_string(options.seed));
            save_model(tr_output, state.model, extra);
            if (!tr_loss_log.empty()) io::write_file(tr_loss_log, loss_log);
            for (const auto& [task, curve] : state.loss_curves) {
                if (!curve.empty()) out << to_string(task) << " final loss " << io::format_real(curve.back()) << "\n";
            }
        } else if (*encode_cmd) {
            const auto loaded = load(enc_model);
            const auto rows = io::read_id_text(enc_input);
            const EmbedMode mode = parse_mode(enc_mode);
            std::vector<std::string> ids, texts, contexts;
            for (const auto& [id, text] : rows) {
                ids.push_back(id);
                texts.push_back(text);
            }
            if (!enc_contexts.empty()) {
                if (mode != EmbedMode::response) throw InvalidArgument("--contexts only applies to --mode response");
                const auto by_id = io::read_id_text_map(enc_contexts);
                for (const auto& id : ids) {
                    auto it = by_id.find(id);
                    contexts.push_back(it == by_id.end() ? std::string{} : it->second);
                }
            }
            EmbeddingTable table{ids, embed_texts(loaded.model, loaded.vocab, texts, mode, contexts, enc_batch, enc_threads)};
            save_embeddings(enc_output, table);
            out << "encoded " << ids.size() << " texts\n";
        } else if (*index_cmd) {
            const auto table = load_embeddings(ix_input);
            if (table.ids.empty()) throw DataError(ix_input + ": no embeddings");
            const EmbeddingIndex index(table.ids, table.vectors);
            save_embeddings(ix_output, table);
            out << "indexed " << index.size() << " vectors of dimension " << table.vectors.dim(1) << "\n";
        } else if (*search_cmd) {
            const auto table = load_embeddings(se_index);
            const EmbeddingIndex index(table.ids, table.vectors);
            EmbeddingTable queries;
            if (!se_query_embeddings.empty() == !se_queries.empty()) {
                throw InvalidArgument("search needs exactly one of --queries or --query-embeddings");
            }
            if (!se_query_embeddings.empty()) {
                queries = load_embeddings(se_query_embeddings);
            } else {
                const auto loaded = load(se_model);
                std::vector<std::string> texts;
                for (auto& [id, text] : io::read_id_text(se_queries)) {
                    queries.ids.push_back(id);
                    texts.push_back(text);
                }
                queries.vectors = embed_texts(loaded.model, loaded.vocab, texts, parse_mode(se_mode), {}, 64, se_threads);
            }
            const Metric metric = parse_metric(se_metric);
            TaskResults results;
            const std::size_t d = queries.ids.empty() ? 0 : queries.vectors.dim(1);
            for (std::size_t i = 0; i < queries.ids.size(); ++i) {
                results[queries.ids[i]] = index.top_k(std::span<const float>(queries.vectors.data() + i * d, d), se_k, metric);
            }
            io::write_results(se_output, results);
            out << "searched " << results.size() << " queries\n";
        } else if (*eval_sr_cmd) {
            RetrievalTaskSpec task;
            if (!sr_task.empty()) {
                task = load_task(sr_task);
            } else {
                if (sr_pairs.empty() || sr_texts.empty()) throw InvalidArgument("eval-sr needs --task or both --pairs and --texts");
                const auto pairs = io::read_pairs(sr_pairs);
                task = build_sr_task(transitive_closure(pairs), io::read_id_text_map(sr_texts));
            }
            const auto loaded = maybe_load(sr);
            task = cross_lingual(std::move(task), sr, loaded ? &*loaded : nullptr, out);
            validate_task(task);
            if (!sr.save_task_path.empty()) save_task(sr.save_task_path, task);
            const auto results = rank(task, sr, loaded ? &*loaded : nullptr, {}, sr_cutoff);
            report(sr, results, {{"sr", "map@" + std::to_string(sr_cutoff), task_map(task, results, sr_cutoff), task.queries.size()}}, out);
        } else if (*eval_bitext_cmd) {
            RetrievalTaskSpec task;
            if (!bt_task.empty()) {
                task = load_task(bt_task);
            } else {
                if (bt_parallel.empty()) throw InvalidArgument("eval-bitext needs --task or --parallel");
                BitextDirection direction;
                if (bt_direction == "source-to-target") {
                    direction = BitextDirection::source_to_target;
                } else if (bt_direction == "target-to-source") {
                    direction = BitextDirection::target_to_source;
                } else {
                    throw InvalidArgument("unknown --direction '" + bt_direction + "'");
                }
                task = build_bitext_task(io::read_pairs(bt_parallel), direction, bt_lang);
            }
            const auto loaded = maybe_load(bt);
            task = cross_lingual(std::move(task), bt, loaded ? &*loaded : nullptr, out);
            validate_task(task);
            if (!bt.save_task_path.empty()) save_task(bt.save_task_path, task);
            const auto results = rank(task, bt, loaded ? &*loaded : nullptr, {}, 10);
            report(bt, results, {{"bitext", "p@1", task_precision_at_1(task, results), task.queries.size()}}, out);
        } else if (*eval_reqa_cmd) {
            ReqaLevel level;
            if (rq_level == "sentence") {
                level = ReqaLevel::sentence;
            } else if (rq_level == "paragraph") {
                level = ReqaLevel::paragraph;
            } else {
                throw InvalidArgument("unknown --level '" + rq_level + "'");
            }
            const auto docs = load_squad(rq_squad);
            const auto loaded = maybe_load(rq);
            auto sentences = cross_lingual(build_reqa(docs, ReqaLevel::sentence), rq, loaded ? &*loaded : nullptr, out);
            validate_task(sentences);
            const EncodeModes modes{EmbedMode::question, EmbedMode::response, !rq_no_context};
            RetrievalTaskSpec task;
            TaskResults results;
            if (level == ReqaLevel::sentence) {
                task = sentences;
                results = rank(task, rq, loaded ? &*loaded : nullptr, modes, 100);
            } else {
                task = cross_lingual(build_reqa(docs, ReqaLevel::paragraph), rq, loaded ? &*loaded : nullptr, out);
                validate_task(task);
                if (rq.bm25) {
                    results = bm25_search(task, 100);
                } else {
                    // Paragraphs come from the ranking of all their sentences.
                    const auto sentence_results = rank(sentences, rq, &*loaded, modes, sentences.candidates.size());
                    results = group_results(sentences, sentence_results);
                }
            }
            if (!rq.save_task_path.empty()) save_task(rq.save_task_path, task);
            report(rq, results, {{"reqa-" + rq_level, "p@1", task_precision_at_1(task, results), task.queries.size()}}, out);
        } else if (*eval_sts_cmd) {
            const auto loaded = load(sts_model);
            const auto pairs = io::read_sts(sts_data);
            std::vector<double> gold;
            for (const auto& p : pairs) gold.push_back(p.gold);
            const auto scores = sts_scores(loaded.model, loaded.vocab, pairs, sts_threads);
            const auto corr = correlate(scores, gold);
            TaskResults results;
            for (std::size_t i = 0; i < pairs.size(); ++i) results["a" + std::to_string(i)] = {{"b" + std::to_string(i), scores[i], 1}};
            io::write_results(sts_results, results);
            const std::vector<io::MetricRecord> records = {{"sts", "pearson", corr.pearson, pairs.size()},
                                                           {"sts", "spearman", corr.spearman, pairs.size()}};
            io::write_metrics(sts_metrics, records);
            out << "pearson " << io::format_real(corr.pearson) << "\nspearman " << io::format_real(corr.spearman) << "\n";
        } else if (*probe_cmd) {
            const auto loaded = load(pr_model);
            const auto train_rows = io::read_classification(pr_train);
            const auto test_rows = io::read_classification(pr_test);
            std::map<std::string, std::int32_t> label_ids;
            for (const auto& r : train_rows) label_ids.emplace(r.label, 0);
            std::int32_t next = 0;
            for (auto& [name, id] : label_ids) id = next++;
            auto encode_rows = [&](const std::vector<io::LabeledText>& rows, const std::string& source) {
                std::vector<std::string> texts;
                std::vector<std::int32_t> labels;
                for (const auto& r : rows) {
                    auto it = label_ids.find(r.label);
                    if (it == label_ids.end()) throw DataError(source + ": label '" + r.label + "' never appears in training data");
                    texts.push_back(r.text);
                    labels.push_back(it->second);
                }
                return std::pair{embed_texts(loaded.model, loaded.vocab, texts, EmbedMode::sentence), labels};
            };
            const auto [train_x, train_y] = encode_rows(train_rows, pr_train);
            const auto [test_x, test_y] = encode_rows(test_rows, pr_test);
            if (label_ids.size() < 2) throw DataError(pr_train + ": need at least two classes");
            pr_config.classes = label_ids.size();
            const auto probe = train_probe(train_x, train_y, pr_config);
            const double accuracy = evaluate_probe(probe, test_x, test_y);
            io::write_metrics(pr_metrics, {{"probe", "accuracy", accuracy, test_y.size()}});
            out << "accuracy " << io::format_real(accuracy) << "\n";
        } else if (*bench_cmd) {
            be_options.lengths = parse_lengths(be_lengths);
            BenchReport bench_report;
            if (!be_checkpoints.empty()) {
                for (const auto& path : be_checkpoints) run_bench(load_model(path), be_options, bench_report);
            } else {
                std::string arch_list = be_arch;
                std::replace(arch_list.begin(), arch_list.end(), ',', ' ');
                std::istringstream names(arch_list);
                std::string name;
                while (names >> name) {
                    auto config = EncoderConfig::desk(parse_architecture(name), be_vocab_size);
                    config.max_len = std::max(config.max_len, *std::max_element(be_options.lengths.begin(), be_options.lengths.end()));
                    run_bench(make_model<float>(config, be_options.seed), be_options, bench_report);
                }
            }
            const auto json = bench_report.to_json();
            if (be_output.empty()) {
                out << json;
            } else {
                io::write_file(be_output, json);
                for (const auto& row : bench_report.rows) {
                    out << row.arch << " length " << row.length << " batch " << row.batch << ": "
                        << io::format_real(row.seconds_per_sentence) << " s/sentence, " << row.memory_bytes << " bytes\n";
                }
            }
        } else if (*gen_toy_cmd) {
            if (gt_count == 0) gt_count = gt_kind == "bitext" ? 2000 : gt_kind == "qa" ? 60 : 200;
            gen_toy(gt_kind, gt_dir, gt_count, gt_seed, gt_dev, out);
        }
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return numeric_error;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return data_error;
    } catch (const InvalidArgument& e) {
        err << "usage error: " << e.what() << "\n";
        return usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return data_error;
    }
    return ok;
}

}  // namespace muse::cli
