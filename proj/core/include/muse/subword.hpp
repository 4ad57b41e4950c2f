#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace muse {

struct TokenSequence {
    std::vector<std::int32_t> ids;
    /// Token count before truncation.
    std::size_t length = 0;
};

/// Byte-pair-encoding vocabulary over Unicode characters.
///
/// Text is split on whitespace and every word is prefixed with U+2581 so
/// merges never cross word boundaries. Characters outside the vocabulary
/// encode as unk. Immutable once built; all const members are thread-safe.
class SubwordVocabulary {
  public:
    static constexpr std::int32_t pad_id = 0;
    static constexpr std::int32_t unk_id = 1;
    static constexpr std::string_view pad_piece = "<pad>";
    static constexpr std::string_view unk_piece = "<unk>";
    static constexpr std::string_view word_marker = "\xE2\x96\x81";

    using Merge = std::pair<std::string, std::string>;

    SubwordVocabulary(std::vector<std::string> pieces, std::vector<Merge> merges);

    [[nodiscard]] std::size_t size() const noexcept { return m_pieces.size(); }
    [[nodiscard]] const std::vector<std::string>& pieces() const noexcept { return m_pieces; }
    [[nodiscard]] const std::vector<Merge>& merges() const noexcept { return m_merges; }
    [[nodiscard]] std::optional<std::int32_t> id(std::string_view piece) const;
    [[nodiscard]] const std::string& piece(std::int32_t id) const { return m_pieces.at(static_cast<std::size_t>(id)); }
    [[nodiscard]] bool contains(std::string_view piece) const { return id(piece).has_value(); }

    /// Lowest-merge-rank-first segmentation of every word; truncates the tail
    /// to max_len tokens.
    [[nodiscard]] TokenSequence encode(std::string_view text, std::size_t max_len) const;

    /// Word pieces of one word, marker included. Unknown characters stay as
    /// their own single-character symbols.
    [[nodiscard]] std::vector<std::string> segment_word(std::string_view word) const;

    /// Concatenates pieces, turning word markers back into single spaces.
    [[nodiscard]] std::string decode(std::span<const std::int32_t> ids) const;

    /// `<piece>\t<id>` lines, then `#MERGES`, then `left\tright` lines in rank order.
    void write(std::ostream& out) const;
    static SubwordVocabulary read(std::istream& in, const std::string& source = "<vocab>");

    void save(const std::string& path) const;
    static SubwordVocabulary load(const std::string& path);

  private:
    std::vector<std::string> m_pieces;
    std::unordered_map<std::string, std::int32_t> m_ids;
    std::vector<Merge> m_merges;
    std::unordered_map<std::string, std::size_t> m_merge_rank;
};

/// Learns a vocabulary of at most target_size pieces. The most frequent
/// characters are kept until they account for `coverage` of the corpus
/// character mass; the rest fall back to unk. Merge ties are broken by the
/// lexicographically smaller (left, right) pair.
SubwordVocabulary train_vocab(std::span<const std::string> corpus, std::size_t target_size, double coverage);

/// Fraction of non-whitespace characters in `sample` that the vocabulary can
/// represent without unk.
double character_coverage(const SubwordVocabulary& vocab, std::span<const std::string> sample);

}  // namespace muse
