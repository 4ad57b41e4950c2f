#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace muse {

/// Flat `key=value` text configuration. Blank lines and lines starting with
/// '#' are ignored; later assignments override earlier ones.
class KeyValueConfig {
  public:
    static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
    static KeyValueConfig load(const std::string& path);

    void set(const std::string& key, std::string value) { m_entries[key] = std::move(value); }
    /// Applies `key=value` overrides, e.g. from the command line.
    void merge(const KeyValueConfig& overrides);

    [[nodiscard]] bool has(const std::string& key) const { return m_entries.count(key) != 0; }
    [[nodiscard]] std::optional<std::string> get(const std::string& key) const;
    [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
    [[nodiscard]] std::size_t get_size(const std::string& key, std::size_t fallback) const;
    [[nodiscard]] double get_double(const std::string& key, double fallback) const;
    [[nodiscard]] std::vector<std::size_t> get_size_list(const std::string& key, std::vector<std::size_t> fallback) const;

    [[nodiscard]] const std::map<std::string, std::string>& entries() const noexcept { return m_entries; }
    [[nodiscard]] std::string to_text() const;

  private:
    std::string m_source = "<config>";
    std::map<std::string, std::string> m_entries;
};

std::vector<std::size_t> parse_size_list(std::string_view text);
std::string format_size_list(const std::vector<std::size_t>& values);

}  // namespace muse
