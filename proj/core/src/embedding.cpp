#include "muse/embedding.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

#include "muse/text_io.hpp"

namespace muse {

namespace {

std::string format_float(float value)
{
    char buffer[32];
    for (int precision = 6; precision <= 9; ++precision) {
        std::snprintf(buffer, sizeof buffer, "%.*g", precision, static_cast<double>(value));
        if (std::strtof(buffer, nullptr) == value) break;
    }
    return buffer;
}

}  // namespace

std::string embeddings_to_text(const EmbeddingTable& table)
{
    const std::size_t n = table.ids.size();
    if (n == 0) return {};
    if (table.vectors.rank() != 2 || table.vectors.dim(0) != n) {
        throw InvalidArgument("embeddings: " + std::to_string(n) + " ids for matrix " + to_string(table.vectors.shape()));
    }
    const std::size_t d = table.vectors.dim(1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        out += table.ids[i];
        out += '\t';
        for (std::size_t j = 0; j < d; ++j) {
            if (j) out += ',';
            out += format_float(table.vectors[i * d + j]);
        }
        out += '\n';
    }
    return out;
}

EmbeddingTable embeddings_from_text(const std::string& text, const std::string& source)
{
    EmbeddingTable table;
    std::vector<float> values;
    std::size_t dim = 0;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) throw DataError(source, number, "expected 'id<TAB>v1,v2,...'");
        std::string id = line.substr(0, tab);
        if (!seen.insert(id).second) throw DataError(source, number, "duplicate id '" + id + "'");
        std::size_t count = 0;
        const char* p = line.data() + tab + 1;
        const char* end = line.data() + line.size();
        while (true) {
            float v = 0.0f;
            auto [ptr, ec] = std::from_chars(p, end, v);
            if (ec != std::errc() || !std::isfinite(v)) throw DataError(source, number, "invalid vector component");
            values.push_back(v);
            ++count;
            if (ptr == end) break;
            if (*ptr != ',') throw DataError(source, number, "invalid vector component");
            p = ptr + 1;
        }
        if (table.ids.empty()) dim = count;
        if (count != dim) {
            throw DataError(source, number, "vector has " + std::to_string(count) + " components, expected " + std::to_string(dim));
        }
        table.ids.push_back(std::move(id));
    }
    table.vectors = Tensor<float>({table.ids.size(), dim}, std::move(values));
    return table;
}

void save_embeddings(const std::string& path, const EmbeddingTable& table)
{
    io::write_file(path, embeddings_to_text(table));
}

EmbeddingTable load_embeddings(const std::string& path)
{
    return embeddings_from_text(io::read_file(path), path);
}

}  // namespace muse
