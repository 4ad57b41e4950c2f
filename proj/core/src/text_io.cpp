#include "muse/text_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace muse::io {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw Error("failed writing '" + path + "'");
}

namespace {

/// (line number, line) for every line, empty ones included.
template <typename F>
void for_each_line(const std::string& path, F&& visit)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        visit(number, line);
    }
}

std::vector<std::string> split_tabs(const std::string& line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

double parse_real(const std::string& text, const std::string& path, std::size_t line, const char* what)
{
    double value = 0.0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        throw DataError(path, line, std::string("invalid ") + what + " '" + text + "'");
    }
    return value;
}

}  // namespace

std::vector<std::string> read_lines(const std::string& path)
{
    std::vector<std::string> out;
    for_each_line(path, [&](std::size_t, const std::string& line) {
        if (!line.empty()) out.push_back(line);
    });
    return out;
}

std::vector<std::vector<std::string>> read_tsv(const std::string& path, std::size_t fields)
{
    std::vector<std::vector<std::string>> rows;
    for_each_line(path, [&](std::size_t number, const std::string& line) {
        if (line.empty()) return;
        auto row = split_tabs(line);
        if (row.size() != fields) {
            throw DataError(path, number, "expected " + std::to_string(fields) + " tab-separated fields, found "
                                              + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    });
    return rows;
}

std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (auto& row : read_tsv(path, 2)) out.emplace_back(std::move(row[0]), std::move(row[1]));
    return out;
}

std::vector<std::pair<std::string, std::string>> read_id_text(const std::string& path)
{
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> seen;
    for_each_line(path, [&](std::size_t number, const std::string& line) {
        if (line.empty()) return;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError(path, number, "expected 'id<TAB>text'");
        std::string id = line.substr(0, tab);
        if (id.empty()) throw DataError(path, number, "empty id");
        if (!seen.insert(id).second) throw DataError(path, number, "duplicate id '" + id + "'");
        out.emplace_back(std::move(id), line.substr(tab + 1));
    });
    return out;
}

std::map<std::string, std::string> read_id_text_map(const std::string& path)
{
    auto rows = read_id_text(path);
    return {std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end())};
}

std::vector<LabeledText> read_classification(const std::string& path)
{
    std::vector<LabeledText> out;
    for (auto& row : read_tsv(path, 2)) out.push_back({std::move(row[0]), std::move(row[1])});
    return out;
}

std::vector<StsPair> read_sts(const std::string& path)
{
    std::vector<StsPair> out;
    for_each_line(path, [&](std::size_t number, const std::string& line) {
        if (line.empty()) return;
        auto row = split_tabs(line);
        if (row.size() != 3) throw DataError(path, number, "expected 'score<TAB>text_a<TAB>text_b'");
        out.push_back({std::move(row[1]), std::move(row[2]), parse_real(row[0], path, number, "score")});
    });
    return out;
}

std::string format_real(double value)
{
    char buffer[64];
    for (int precision = 6; precision <= 17; ++precision) {
        std::snprintf(buffer, sizeof buffer, "%.*g", precision, value);
        if (std::strtod(buffer, nullptr) == value) break;
    }
    return buffer;
}

std::string results_to_tsv(const std::map<std::string, ResultList>& results)
{
    std::string out;
    for (const auto& [qid, list] : results) {
        for (const auto& r : list) {
            out += qid + '\t' + std::to_string(r.rank) + '\t' + r.id + '\t' + format_real(r.score) + '\n';
        }
    }
    return out;
}

void write_results(const std::string& path, const std::map<std::string, ResultList>& results)
{
    write_file(path, results_to_tsv(results));
}

std::string metrics_to_json(const std::vector<MetricRecord>& records)
{
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : records) {
        nlohmann::ordered_json o;
        o["task"] = r.task;
        o["metric"] = r.metric;
        o["value"] = r.value;
        o["n_queries"] = r.n_queries;
        arr.push_back(std::move(o));
    }
    return arr.dump(2) + "\n";
}

void write_metrics(const std::string& path, const std::vector<MetricRecord>& records)
{
    write_file(path, metrics_to_json(records));
}

}  // namespace muse::io
