#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muse/multitask.hpp"

namespace muse {

struct BenchOptions {
    std::vector<std::size_t> lengths = {8, 16, 32, 64, 128};
    std::size_t batch = 32;
    std::size_t repeats = 3;
    std::uint64_t seed = 1;
};

struct BenchRow {
    std::string arch;
    std::size_t length = 0;
    std::size_t batch = 0;
    double seconds_per_sentence = 0.0;
    /// Bytes of every tensor alive at the end of one forward pass.
    std::size_t memory_bytes = 0;
};

struct BenchReport {
    std::vector<BenchRow> rows;

    /// seconds_per_sentence(long) / seconds_per_sentence(short) for `arch`.
    [[nodiscard]] double time_ratio(const std::string& arch, std::size_t short_length, std::size_t long_length) const;
    [[nodiscard]] std::string to_json() const;
};

/// Times inference-mode forward passes over random full-length batches: one
/// warm-up, then the mean of `repeats` timed passes per length. Rows are
/// appended in length order.
void run_bench(const DualEncoderModel<float>& model, const BenchOptions& options, BenchReport& report);

}  // namespace muse
