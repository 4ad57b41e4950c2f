#include "muse/subword.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "muse/error.hpp"
#include "muse/utf8.hpp"

namespace muse {

namespace {

std::string merge_key(std::string_view left, std::string_view right)
{
    std::string key;
    key.reserve(left.size() + right.size() + 1);
    key.append(left);
    key.push_back('\t');
    key.append(right);
    return key;
}

bool is_special(std::string_view piece)
{
    return piece == SubwordVocabulary::pad_piece || piece == SubwordVocabulary::unk_piece;
}

}  // namespace

SubwordVocabulary::SubwordVocabulary(std::vector<std::string> pieces, std::vector<Merge> merges)
    : m_pieces(std::move(pieces)), m_merges(std::move(merges))
{
    if (m_pieces.size() < 2 || m_pieces[pad_id] != pad_piece || m_pieces[unk_id] != unk_piece) {
        throw InvalidArgument("vocabulary: ids 0 and 1 must be <pad> and <unk>");
    }
    for (std::size_t i = 0; i < m_pieces.size(); ++i) {
        if (m_pieces[i].empty()) throw InvalidArgument("vocabulary: empty piece at id " + std::to_string(i));
        if (!m_ids.emplace(m_pieces[i], static_cast<std::int32_t>(i)).second) {
            throw InvalidArgument("vocabulary: duplicate piece '" + m_pieces[i] + "'");
        }
    }
    for (std::size_t r = 0; r < m_merges.size(); ++r) {
        const auto& [left, right] = m_merges[r];
        if (!m_ids.count(left) || !m_ids.count(right) || !m_ids.count(left + right)) {
            throw InvalidArgument("vocabulary: merge '" + left + "' + '" + right + "' refers to unknown pieces");
        }
        m_merge_rank.emplace(merge_key(left, right), r);
    }
}

std::optional<std::int32_t> SubwordVocabulary::id(std::string_view piece) const
{
    auto it = m_ids.find(std::string(piece));
    if (it == m_ids.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> SubwordVocabulary::segment_word(std::string_view word) const
{
    std::vector<std::string> symbols;
    symbols.emplace_back(word_marker);
    for (auto& ch : utf8::characters(word)) symbols.push_back(std::move(ch));

    while (symbols.size() > 1) {
        std::size_t best_rank = static_cast<std::size_t>(-1);
        std::size_t best_pos = 0;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            auto it = m_merge_rank.find(merge_key(symbols[i], symbols[i + 1]));
            if (it != m_merge_rank.end() && it->second < best_rank) {
                best_rank = it->second;
                best_pos = i;
            }
        }
        if (best_rank == static_cast<std::size_t>(-1)) break;
        symbols[best_pos] += symbols[best_pos + 1];
        symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
    return symbols;
}

TokenSequence SubwordVocabulary::encode(std::string_view text, std::size_t max_len) const
{
    if (max_len < 1) throw InvalidArgument("encode_text: max_len must be >= 1");
    TokenSequence seq;
    for (const auto& word : utf8::split_whitespace(text)) {
        for (const auto& symbol : segment_word(word)) {
            ++seq.length;
            if (seq.ids.size() < max_len) {
                auto found = id(symbol);
                seq.ids.push_back(found ? *found : unk_id);
            }
        }
    }
    return seq;
}

std::string SubwordVocabulary::decode(std::span<const std::int32_t> ids) const
{
    std::string out;
    for (std::int32_t i : ids) {
        if (i == pad_id) continue;
        out += piece(i);
    }
    std::string text;
    std::size_t pos = 0;
    while (pos < out.size()) {
        if (out.compare(pos, word_marker.size(), word_marker) == 0) {
            if (!text.empty()) text.push_back(' ');
            pos += word_marker.size();
        } else {
            text.push_back(out[pos++]);
        }
    }
    return text;
}

void SubwordVocabulary::write(std::ostream& out) const
{
    for (std::size_t i = 0; i < m_pieces.size(); ++i) out << m_pieces[i] << '\t' << i << '\n';
    out << "#MERGES\n";
    for (const auto& [left, right] : m_merges) out << left << '\t' << right << '\n';
}

SubwordVocabulary SubwordVocabulary::read(std::istream& in, const std::string& source)
{
    std::map<std::int64_t, std::string> by_id;
    std::vector<Merge> merges;
    std::string line;
    std::size_t line_no = 0;
    bool in_merges = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!in_merges && line == "#MERGES") {
            in_merges = true;
            continue;
        }
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw DataError(source, line_no, "expected exactly two tab-separated fields");
        }
        std::string left = line.substr(0, tab);
        std::string right = line.substr(tab + 1);
        if (in_merges) {
            merges.emplace_back(std::move(left), std::move(right));
            continue;
        }
        std::int64_t id = -1;
        std::istringstream parse(right);
        if (!(parse >> id) || !parse.eof() || id < 0) throw DataError(source, line_no, "invalid id '" + right + "'");
        if (!by_id.emplace(id, std::move(left)).second) {
            throw DataError(source, line_no, "duplicate id " + std::to_string(id));
        }
    }
    std::vector<std::string> pieces;
    pieces.reserve(by_id.size());
    for (auto& [id, piece] : by_id) {
        if (id != static_cast<std::int64_t>(pieces.size())) {
            throw DataError(source + ": ids are not contiguous from 0 (missing " + std::to_string(pieces.size()) + ")");
        }
        pieces.push_back(std::move(piece));
    }
    try {
        return SubwordVocabulary(std::move(pieces), std::move(merges));
    } catch (const InvalidArgument& e) {
        throw DataError(source + ": " + e.what());
    }
}

void SubwordVocabulary::save(const std::string& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write(out);
}

SubwordVocabulary SubwordVocabulary::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary '" + path + "'");
    return read(in, path);
}

SubwordVocabulary train_vocab(std::span<const std::string> corpus, std::size_t target_size, double coverage)
{
    if (corpus.empty()) throw InvalidArgument("train_vocab: empty corpus");
    if (!(coverage > 0.0 && coverage <= 1.0)) throw InvalidArgument("train_vocab: coverage must lie in (0, 1]");

    std::map<std::string, std::int64_t> word_counts;
    std::map<std::string, std::int64_t> char_counts;
    std::int64_t total_chars = 0;
    for (const auto& line : corpus) {
        for (auto& word : utf8::split_whitespace(line)) {
            for (auto& ch : utf8::characters(word)) {
                ++char_counts[ch];
                ++total_chars;
            }
            ++word_counts[std::move(word)];
        }
    }
    if (total_chars == 0) throw InvalidArgument("train_vocab: corpus has no characters");

    std::vector<std::pair<std::string, std::int64_t>> by_freq(char_counts.begin(), char_counts.end());
    std::stable_sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    std::vector<std::string> pieces{std::string(SubwordVocabulary::pad_piece), std::string(SubwordVocabulary::unk_piece),
                                    std::string(SubwordVocabulary::word_marker)};
    std::set<std::string> known(pieces.begin(), pieces.end());
    std::int64_t kept_mass = 0;
    for (const auto& [ch, count] : by_freq) {
        if (static_cast<double>(kept_mass) >= coverage * static_cast<double>(total_chars)) break;
        if (known.insert(ch).second) pieces.push_back(ch);
        kept_mass += count;
    }
    if (target_size < pieces.size()) {
        throw InvalidArgument("train_vocab: target_size " + std::to_string(target_size) + " cannot hold the "
                              + std::to_string(pieces.size()) + " base pieces (specials, marker, retained characters)");
    }

    // Symbols are interned; -1 marks an out-of-vocabulary character, which
    // never takes part in a merge.
    std::vector<std::string> symbol_text;
    std::unordered_map<std::string, int> symbol_id;
    auto intern = [&](const std::string& s) {
        auto [it, inserted] = symbol_id.emplace(s, static_cast<int>(symbol_text.size()));
        if (inserted) symbol_text.push_back(s);
        return it->second;
    };
    for (std::size_t i = 2; i < pieces.size(); ++i) intern(pieces[i]);

    struct Word {
        std::vector<int> symbols;
        std::int64_t count;
    };
    std::vector<Word> words;
    words.reserve(word_counts.size());
    for (const auto& [text, count] : word_counts) {
        Word w{{}, count};
        w.symbols.push_back(symbol_id.at(std::string(SubwordVocabulary::word_marker)));
        for (const auto& ch : utf8::characters(text)) {
            auto it = symbol_id.find(ch);
            w.symbols.push_back(it == symbol_id.end() ? -1 : it->second);
        }
        words.push_back(std::move(w));
    }

    using PairKey = std::uint64_t;
    auto key_of = [](int a, int b) { return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b); };
    std::unordered_map<PairKey, std::int64_t> pair_counts;
    std::unordered_map<PairKey, std::set<std::size_t>> pair_words;
    auto account = [&](std::size_t wi, std::int64_t sign) {
        const Word& w = words[wi];
        for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
            if (w.symbols[i] < 0 || w.symbols[i + 1] < 0) continue;
            const PairKey k = key_of(w.symbols[i], w.symbols[i + 1]);
            pair_counts[k] += sign * w.count;
            if (sign > 0) pair_words[k].insert(wi);
        }
    };
    for (std::size_t wi = 0; wi < words.size(); ++wi) account(wi, +1);

    std::vector<SubwordVocabulary::Merge> merges;
    std::set<PairKey> banned;
    while (pieces.size() < target_size) {
        PairKey best = 0;
        std::int64_t best_count = 0;
        for (const auto& [k, count] : pair_counts) {
            if (count <= 0 || banned.count(k)) continue;
            if (count > best_count) {
                best = k;
                best_count = count;
                continue;
            }
            if (count == best_count) {
                const int a = static_cast<int>(k >> 32), b = static_cast<int>(k & 0xFFFFFFFFu);
                const int ba = static_cast<int>(best >> 32), bb = static_cast<int>(best & 0xFFFFFFFFu);
                if (std::tie(symbol_text[a], symbol_text[b]) < std::tie(symbol_text[ba], symbol_text[bb])) best = k;
            }
        }
        if (best_count <= 0) break;

        const int left = static_cast<int>(best >> 32), right = static_cast<int>(best & 0xFFFFFFFFu);
        const std::string merged = symbol_text[left] + symbol_text[right];
        if (is_special(merged)) {
            banned.insert(best);
            continue;
        }
        merges.emplace_back(symbol_text[left], symbol_text[right]);
        const bool is_new = known.insert(merged).second;
        if (is_new) pieces.push_back(merged);
        const int merged_id = intern(merged);

        const std::set<std::size_t> affected = pair_words[best];
        for (std::size_t wi : affected) {
            account(wi, -1);
            auto& syms = words[wi].symbols;
            std::vector<int> next;
            next.reserve(syms.size());
            for (std::size_t i = 0; i < syms.size(); ++i) {
                if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
                    next.push_back(merged_id);
                    ++i;
                } else {
                    next.push_back(syms[i]);
                }
            }
            syms = std::move(next);
            account(wi, +1);
        }
        pair_counts.erase(best);
        pair_words.erase(best);
    }
    return SubwordVocabulary(std::move(pieces), std::move(merges));
}

double character_coverage(const SubwordVocabulary& vocab, std::span<const std::string> sample)
{
    if (sample.empty()) throw InvalidArgument("character_coverage: empty sample");
    std::size_t total = 0;
    std::size_t known = 0;
    for (const auto& line : sample) {
        for (const auto& word : utf8::split_whitespace(line)) {
            for (const auto& ch : utf8::characters(word)) {
                ++total;
                if (vocab.contains(ch)) ++known;
            }
        }
    }
    if (total == 0) throw InvalidArgument("character_coverage: sample has no characters");
    return static_cast<double>(known) / static_cast<double>(total);
}

}  // namespace muse
