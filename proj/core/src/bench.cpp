#include "muse/bench.hpp"

#include <chrono>
#include <random>

#include "json.hpp"

namespace muse {

double BenchReport::time_ratio(const std::string& arch, std::size_t short_length, std::size_t long_length) const
{
    const BenchRow* lo = nullptr;
    const BenchRow* hi = nullptr;
    for (const auto& row : rows) {
        if (row.arch != arch) continue;
        if (row.length == short_length) lo = &row;
        if (row.length == long_length) hi = &row;
    }
    if (!lo || !hi) throw InvalidArgument("bench: no rows for " + arch + " at lengths " + std::to_string(short_length)
                                          + " and " + std::to_string(long_length));
    return hi->seconds_per_sentence / lo->seconds_per_sentence;
}

std::string BenchReport::to_json() const
{
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
        nlohmann::ordered_json o;
        o["arch"] = row.arch;
        o["length"] = row.length;
        o["batch"] = row.batch;
        o["seconds_per_sentence"] = row.seconds_per_sentence;
        o["memory_bytes"] = row.memory_bytes;
        arr.push_back(std::move(o));
    }
    return arr.dump(2) + "\n";
}

void run_bench(const DualEncoderModel<float>& model, const BenchOptions& options, BenchReport& report)
{
    const auto& config = model.config;
    if (options.batch == 0 || options.repeats == 0) throw InvalidArgument("bench: batch and repeats must be positive");
    if (config.vocab_size <= 2) throw InvalidArgument("bench: vocabulary has no ordinary pieces");
    std::vector<std::size_t> lengths = options.lengths;
    if (lengths.empty()) throw InvalidArgument("bench: no lengths");
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        if (lengths[i] == 0) throw InvalidArgument("bench: lengths must be positive");
        if (i && lengths[i] <= lengths[i - 1]) throw InvalidArgument("bench: lengths must be strictly increasing");
        if (lengths[i] > config.max_len) {
            throw InvalidArgument("bench: length " + std::to_string(lengths[i]) + " exceeds max_len "
                                  + std::to_string(config.max_len));
        }
    }

    std::mt19937_64 rng(options.seed);
    for (std::size_t length : lengths) {
        std::vector<std::vector<std::int32_t>> ids(options.batch, std::vector<std::int32_t>(length));
        for (auto& seq : ids) {
            for (auto& id : seq) id = static_cast<std::int32_t>(2 + rng() % (config.vocab_size - 2));
        }
        const TokenBatch batch = make_token_batch(std::span<const std::vector<std::int32_t>>(ids));

        std::size_t bytes = 0;
        auto forward = [&] {
            Graph<float> g(false);
            encode_sentences(g, config, model.params, batch);
            bytes = g.value_bytes();
        };
        forward();
        using clock = std::chrono::steady_clock;
        const auto start = clock::now();
        for (std::size_t r = 0; r < options.repeats; ++r) forward();
        const std::chrono::duration<double> elapsed = clock::now() - start;
        report.rows.push_back({to_string(config.arch), length, options.batch,
                               elapsed.count() / static_cast<double>(options.repeats * options.batch), bytes});
    }
}

}  // namespace muse
