#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "muse/retrieval.hpp"
#include "muse/transfer.hpp"

// Tab-separated file formats. Readers raise DataError carrying the file name
// and 1-based line number of the first malformed record.
namespace muse::io {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Non-empty lines (a trailing '\r' is stripped).
std::vector<std::string> read_lines(const std::string& path);

/// Every line split on tabs; each must have exactly `fields` fields.
std::vector<std::vector<std::string>> read_tsv(const std::string& path, std::size_t fields);

/// `a<TAB>b` lines: paraphrase id pairs or parallel sentences.
std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path);

/// `id<TAB>text` lines with unique ids, in file order.
std::vector<std::pair<std::string, std::string>> read_id_text(const std::string& path);
std::map<std::string, std::string> read_id_text_map(const std::string& path);

struct LabeledText {
    std::string label;
    std::string text;
};

/// `label<TAB>text` lines.
std::vector<LabeledText> read_classification(const std::string& path);

/// `score<TAB>text_a<TAB>text_b` lines.
std::vector<StsPair> read_sts(const std::string& path);

/// `query_id<TAB>rank<TAB>candidate_id<TAB>score` lines, queries in map order.
std::string results_to_tsv(const std::map<std::string, ResultList>& results);
void write_results(const std::string& path, const std::map<std::string, ResultList>& results);

struct MetricRecord {
    std::string task;
    std::string metric;
    double value = 0.0;
    std::size_t n_queries = 0;
};

std::string metrics_to_json(const std::vector<MetricRecord>& records);
void write_metrics(const std::string& path, const std::vector<MetricRecord>& records);

/// Shortest decimal form that reads back to the same double.
std::string format_real(double value);

}  // namespace muse::io
