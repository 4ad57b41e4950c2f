#include "muse/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "muse/error.hpp"

namespace muse {

namespace {

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::size_t parse_size(std::string_view text, const std::string& what)
{
    std::size_t value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw InvalidArgument(what + ": expected a non-negative integer, got '" + std::string(text) + "'");
    return value;
}

}  // namespace

std::vector<std::size_t> parse_size_list(std::string_view text)
{
    std::vector<std::size_t> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        out.push_back(parse_size(trim(text.substr(0, comma)), "list"));
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return out;
}

std::string format_size_list(const std::vector<std::size_t>& values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i != 0) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source)
{
    KeyValueConfig cfg;
    cfg.m_source = source;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw DataError(source, line_no, "expected key=value");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw DataError(source, line_no, "empty key");
        cfg.m_entries[std::string(key)] = std::string(trim(line.substr(eq + 1)));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path);
}

void KeyValueConfig::merge(const KeyValueConfig& overrides)
{
    for (const auto& [k, v] : overrides.m_entries) m_entries[k] = v;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const
{
    auto it = m_entries.find(key);
    if (it == m_entries.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const
{
    return get(key).value_or(fallback);
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const
{
    auto v = get(key);
    return v ? parse_size(*v, m_source + ": " + key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw InvalidArgument(m_source + ": " + key + ": expected a number, got '" + *v + "'");
    }
}

std::vector<std::size_t> KeyValueConfig::get_size_list(const std::string& key, std::vector<std::size_t> fallback) const
{
    auto v = get(key);
    return v ? parse_size_list(*v) : fallback;
}

std::string KeyValueConfig::to_text() const
{
    std::string out;
    for (const auto& [k, v] : m_entries) out += k + "=" + v + "\n";
    return out;
}

}  // namespace muse
