#include "muse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "muse/utf8.hpp"

namespace muse::synthetic {

namespace {

// Library distributions are implementation-defined; these helpers keep the
// corpora identical across standard libraries.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t below(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(unit(rng) * static_cast<double>(n)); }

std::size_t between(std::mt19937_64& rng, std::size_t lo, std::size_t hi) { return lo + below(rng, hi - lo + 1); }

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng)
{
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(rng, i)]);
}

class Zipf {
  public:
    Zipf(std::size_t n, double exponent) : m_cumulative(n)
    {
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) m_cumulative[r] = total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
        for (auto& c : m_cumulative) c /= total;
    }

    std::size_t operator()(std::mt19937_64& rng) const
    {
        const double u = unit(rng);
        auto it = std::upper_bound(m_cumulative.begin(), m_cumulative.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - m_cumulative.begin()), m_cumulative.size() - 1);
    }

  private:
    std::vector<double> m_cumulative;
};

struct Script {
    std::string code;
    std::vector<char32_t> alphabet;
    std::size_t min_word = 2;
    std::size_t max_word = 8;
};

std::vector<char32_t> range(char32_t first, std::size_t count, std::size_t step = 1)
{
    std::vector<char32_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(first + static_cast<char32_t>(i * step));
    return out;
}

std::vector<char32_t> latin(std::u32string_view accents)
{
    auto out = range(U'a', 26);
    out.insert(out.end(), accents.begin(), accents.end());
    return out;
}

const std::vector<Script>& scripts()
{
    static const std::vector<Script> list = [] {
        std::vector<Script> s;
        s.push_back({"en", latin(U""), 2, 8});
        s.push_back({"de", latin(U"äöüß"), 2, 9});
        s.push_back({"fr", latin(U"éèêàçôû"), 2, 8});
        s.push_back({"es", latin(U"ñáéíóú"), 2, 8});
        s.push_back({"it", latin(U"àèéìòù"), 2, 8});
        s.push_back({"pt", latin(U"ãõçáéâêó"), 2, 8});
        s.push_back({"nl", latin(U"ëï"), 2, 9});
        s.push_back({"pl", latin(U"ąćęłńóśźż"), 2, 8});
        s.push_back({"tr", latin(U"çğıöşü"), 2, 8});
        s.push_back({"ru", range(0x430, 32), 2, 8});
        auto arabic = range(0x627, 20);
        auto arabic_tail = range(0x641, 10);
        arabic.insert(arabic.end(), arabic_tail.begin(), arabic_tail.end());
        s.push_back({"ar", arabic, 2, 6});
        s.push_back({"th", range(0xE01, 30), 2, 6});
        s.push_back({"ko", range(0xAC00, 50, 97), 1, 3});
        auto japanese = range(0x3042, 50);
        auto kanji = range(0x4E00, 20, 7);
        japanese.insert(japanese.end(), kanji.begin(), kanji.end());
        s.push_back({"ja", japanese, 1, 4});
        s.push_back({"zh", range(0x4E00, 100, 7), 1, 3});
        s.push_back({"zh-tw", range(0x4E00 + 60 * 7, 100, 7), 1, 3});
        return s;
    }();
    return list;
}

std::string make_word(const Script& script, const std::vector<char32_t>& ranked, const Zipf& chars, std::mt19937_64& rng)
{
    std::string word;
    const std::size_t length = between(rng, script.min_word, script.max_word);
    for (std::size_t i = 0; i < length; ++i) word += utf8::encode(ranked[chars(rng)]);
    return word;
}

std::string join(const std::vector<std::string>& words)
{
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::string syllable_word(std::mt19937_64& rng, std::size_t syllables)
{
    static const std::string consonants = "bdfgklmnprstvz";
    static const std::string vowels = "aeiou";
    std::string word;
    for (std::size_t i = 0; i < syllables; ++i) {
        word += consonants[below(rng, consonants.size())];
        word += vowels[below(rng, vowels.size())];
    }
    return word;
}

std::string capitalised(std::string word)
{
    if (!word.empty()) word[0] = static_cast<char>(word[0] - 'a' + 'A');
    return word;
}

/// `count` distinct syllable words; stable for a given rng state.
std::vector<std::string> distinct_words(std::mt19937_64& rng, std::size_t count, std::size_t min_syl, std::size_t max_syl)
{
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < count) {
        auto w = syllable_word(rng, between(rng, min_syl, max_syl));
        if (seen.insert(w).second) out.push_back(std::move(w));
    }
    return out;
}

}  // namespace

const std::vector<std::string>& toy_languages()
{
    static const std::vector<std::string> codes = [] {
        std::vector<std::string> out;
        for (const auto& s : scripts()) out.push_back(s.code);
        return out;
    }();
    return codes;
}

std::vector<LanguageLine> multilingual_corpus(std::size_t lines_per_language, std::uint64_t seed)
{
    constexpr std::size_t lexicon_size = 300;
    constexpr double novel_word_rate = 0.05;
    std::vector<std::vector<LanguageLine>> per_language;
    for (std::size_t l = 0; l < scripts().size(); ++l) {
        const auto& script = scripts()[l];
        // The lexicon depends only on the language, so corpora drawn with
        // different seeds share vocabulary the way samples of one language do.
        std::mt19937_64 lexicon_rng(0x5eed0000 + l);
        auto ranked = script.alphabet;
        shuffle(ranked, lexicon_rng);
        const Zipf chars(ranked.size(), 1.0);
        std::vector<std::string> lexicon;
        for (std::size_t i = 0; i < lexicon_size; ++i) lexicon.push_back(make_word(script, ranked, chars, lexicon_rng));

        std::mt19937_64 rng(seed * 1000003 + l);
        const Zipf words(lexicon.size(), 1.0);
        std::vector<LanguageLine> lines;
        for (std::size_t n = 0; n < lines_per_language; ++n) {
            std::vector<std::string> sentence;
            const std::size_t length = between(rng, 4, 12);
            for (std::size_t i = 0; i < length; ++i) {
                sentence.push_back(unit(rng) < novel_word_rate ? make_word(script, ranked, chars, rng) : lexicon[words(rng)]);
            }
            lines.push_back({script.code, join(sentence)});
        }
        per_language.push_back(std::move(lines));
    }
    std::vector<LanguageLine> out;
    for (std::size_t n = 0; n < lines_per_language; ++n) {
        for (auto& lines : per_language) out.push_back(std::move(lines[n]));
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> cipher_bitext(std::size_t pairs, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const auto lexicon = distinct_words(rng, 200, 1, 3);
    std::vector<char32_t> cyrillic = range(0x430, 26);
    shuffle(cyrillic, rng);
    auto encipher = [&](const std::string& word) {
        std::string out;
        for (char c : word) out += utf8::encode(cyrillic[static_cast<std::size_t>(c - 'a')]);
        return out;
    };
    const Zipf words(lexicon.size(), 0.5);
    std::set<std::string> seen;
    std::vector<std::pair<std::string, std::string>> out;
    while (out.size() < pairs) {
        std::vector<std::string> source, target;
        const std::size_t length = between(rng, 5, 10);
        for (std::size_t i = 0; i < length; ++i) {
            const auto& w = lexicon[words(rng)];
            source.push_back(w);
            target.push_back(encipher(w));
        }
        auto text = join(source);
        if (seen.insert(text).second) out.emplace_back(std::move(text), join(target));
    }
    return out;
}

std::string QaParagraph::text() const { return join(sentences); }

std::vector<QaParagraph> qa_corpus(std::size_t entities, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    auto names = distinct_words(rng, entities + 40, 2, 3);
    const std::vector<std::string> entity_names(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(entities));
    const std::vector<std::string> people(names.begin() + static_cast<std::ptrdiff_t>(entities),
                                          names.begin() + static_cast<std::ptrdiff_t>(entities + 20));
    const std::vector<std::string> rivers(names.begin() + static_cast<std::ptrdiff_t>(entities + 20), names.end());
    static const std::vector<std::string> kinds = {"town", "village", "city", "harbor"};
    static const std::vector<std::string> directions = {"north", "south", "east", "west"};
    static const std::vector<std::string> foods = {"smoked fish", "honey cakes", "goat cheese", "plum wine",
                                                   "salted olives", "rye bread", "pepper sausage", "apple cider"};
    static const std::vector<std::string> counts = {"two hundred", "five hundred", "one thousand", "three thousand",
                                                    "ten thousand", "forty thousand"};
    static const std::vector<std::string> festivals = {"lanterns", "kites", "masks", "bells", "candles", "drums"};

    auto pick = [&](const std::vector<std::string>& pool) -> const std::string& { return pool[below(rng, pool.size())]; };
    std::vector<QaParagraph> out;
    for (const auto& raw : entity_names) {
        const std::string e = capitalised(raw);
        QaParagraph p;
        p.entity = e;
        p.sentences.push_back(e + " is a " + pick(kinds) + " in the " + pick(directions) + " of the valley.");
        struct Fact {
            std::string sentence;
            std::string question;
        };
        std::vector<Fact> facts = {
            {"It lies beside the river " + capitalised(pick(rivers)) + ".", "Which river runs past " + e + "?"},
            {"It was founded by a merchant named " + capitalised(pick(people)) + ".", "Who founded " + e + "?"},
            {"Its markets are known for " + pick(foods) + ".", "What food is " + e + " famous for?"},
            {"About " + pick(counts) + " people live there today.", "How many people live in " + e + "?"},
            {"Every spring it holds a festival of " + pick(festivals) + ".", "What does " + e + " celebrate each spring?"},
        };
        shuffle(facts, rng);
        for (auto& f : facts) {
            p.questions.push_back({std::move(f.question), p.sentences.size()});
            p.sentences.push_back(std::move(f.sentence));
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<TrainingExample> qa_examples(const std::vector<QaParagraph>& paragraphs, bool with_context)
{
    std::vector<TrainingExample> out;
    for (const auto& p : paragraphs) {
        const auto context = p.text();
        for (const auto& q : p.questions) {
            TrainingExample ex;
            ex.task = Task::qa;
            ex.source = q.text;
            ex.target = p.sentences[q.sentence];
            if (with_context) ex.context = context;
            ex.lang_pair = "en-en";
            out.push_back(std::move(ex));
        }
    }
    return out;
}

}  // namespace muse::synthetic
