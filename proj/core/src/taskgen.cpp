#include "muse/taskgen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "muse/utf8.hpp"

namespace muse {

void validate_task(const RetrievalTaskSpec& task)
{
    std::set<std::string> candidate_ids;
    for (const auto& c : task.candidates) {
        if (!candidate_ids.insert(c.id).second) throw DataError("task: duplicate candidate id '" + c.id + "'");
    }
    std::set<std::string> query_ids;
    for (const auto& q : task.queries) {
        if (!query_ids.insert(q.id).second) throw DataError("task: duplicate query id '" + q.id + "'");
        auto it = task.relevance.find(q.id);
        if (it == task.relevance.end() || it->second.empty()) {
            throw DataError("task: query '" + q.id + "' has no relevant candidate");
        }
    }
    for (const auto& [qid, rel] : task.relevance) {
        if (!query_ids.count(qid)) throw DataError("task: relevance for unknown query '" + qid + "'");
        for (const auto& cid : rel) {
            if (!candidate_ids.count(cid)) throw DataError("task: query '" + qid + "' judges unknown candidate '" + cid + "'");
            if (task.exclude_self && cid == qid) throw DataError("task: query '" + qid + "' is judged relevant to itself");
        }
    }
    for (const auto& [cid, group] : task.candidate_groups) {
        if (!candidate_ids.count(cid)) throw DataError("task: group entry for unknown candidate '" + cid + "'");
    }
}

std::string task_to_json(const RetrievalTaskSpec& task)
{
    nlohmann::ordered_json j;
    j["kind"] = task.kind;
    j["language_pair"] = task.language_pair;
    j["level"] = task.level;
    j["exclude_self"] = task.exclude_self;
    auto items = [](const std::vector<TextItem>& list) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& item : list) {
            nlohmann::ordered_json o;
            o["id"] = item.id;
            o["text"] = item.text;
            if (!item.context.empty()) o["context"] = item.context;
            arr.push_back(std::move(o));
        }
        return arr;
    };
    j["queries"] = items(task.queries);
    j["candidates"] = items(task.candidates);
    nlohmann::ordered_json rel = nlohmann::ordered_json::object();
    for (const auto& [qid, set] : task.relevance) rel[qid] = std::vector<std::string>(set.begin(), set.end());
    j["relevance"] = std::move(rel);
    if (!task.candidate_groups.empty()) {
        nlohmann::ordered_json groups = nlohmann::ordered_json::object();
        for (const auto& [cid, gid] : task.candidate_groups) groups[cid] = gid;
        j["candidate_groups"] = std::move(groups);
    }
    return j.dump(1);
}

RetrievalTaskSpec task_from_json(std::string_view json, const std::string& source)
{
    RetrievalTaskSpec task;
    try {
        const auto j = nlohmann::json::parse(json);
        task.kind = j.at("kind").get<std::string>();
        task.language_pair = j.value("language_pair", "");
        task.level = j.value("level", "");
        task.exclude_self = j.value("exclude_self", false);
        auto items = [](const nlohmann::json& arr) {
            std::vector<TextItem> out;
            for (const auto& o : arr) out.push_back({o.at("id").get<std::string>(), o.at("text").get<std::string>(), o.value("context", "")});
            return out;
        };
        task.queries = items(j.at("queries"));
        task.candidates = items(j.at("candidates"));
        for (const auto& [qid, arr] : j.at("relevance").items()) {
            auto ids = arr.get<std::vector<std::string>>();
            task.relevance[qid] = RelevanceSet(ids.begin(), ids.end());
        }
        if (j.contains("candidate_groups")) {
            for (const auto& [cid, gid] : j.at("candidate_groups").items()) task.candidate_groups[cid] = gid.get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(source + ": malformed task spec: " + e.what());
    }
    try {
        validate_task(task);
    } catch (const DataError& e) {
        throw DataError(source + ": " + e.what());
    }
    return task;
}

void save_task(const std::string& path, const RetrievalTaskSpec& task)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << task_to_json(task) << '\n';
}

RetrievalTaskSpec load_task(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open task spec '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return task_from_json(buffer.str(), path);
}

std::vector<Cluster> transitive_closure(std::span<const std::pair<std::string, std::string>> pairs)
{
    std::map<std::string, std::size_t> index;
    for (const auto& [a, b] : pairs) {
        index.emplace(a, 0);
        index.emplace(b, 0);
    }
    std::vector<std::string> names;
    names.reserve(index.size());
    for (auto& [name, i] : index) {
        i = names.size();
        names.push_back(name);
    }
    std::vector<std::size_t> parent(names.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (const auto& [a, b] : pairs) {
        std::size_t ra = find(index[a]);
        std::size_t rb = find(index[b]);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
    // Roots are the smallest member, and names are sorted, so iterating in
    // name order yields sorted members and clusters ordered by first member.
    std::map<std::size_t, Cluster> by_root;
    for (std::size_t i = 0; i < names.size(); ++i) by_root[find(i)].push_back(names[i]);
    std::vector<Cluster> out;
    out.reserve(by_root.size());
    for (auto& [root, members] : by_root) out.push_back(std::move(members));
    return out;
}

RetrievalTaskSpec build_sr_task(std::span<const Cluster> clusters, const std::map<std::string, std::string>& texts)
{
    RetrievalTaskSpec task;
    task.kind = "sr";
    task.language_pair = "en-en";
    task.level = "sentence";
    task.exclude_self = true;
    for (const auto& [id, text] : texts) task.candidates.push_back({id, text, {}});
    for (const auto& cluster : clusters) {
        for (const auto& id : cluster) {
            if (!texts.count(id)) throw InvalidArgument("build_sr_task: no text for cluster member '" + id + "'");
        }
        if (cluster.size() < 2) continue;
        for (const auto& id : cluster) {
            task.queries.push_back({id, texts.at(id), {}});
            RelevanceSet rel(cluster.begin(), cluster.end());
            rel.erase(id);
            task.relevance[id] = std::move(rel);
        }
    }
    std::sort(task.queries.begin(), task.queries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return task;
}

namespace {

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_closing(std::string_view text, std::size_t pos, std::size_t& width)
{
    const char c = text[pos];
    if (c == '"' || c == '\'' || c == ')' || c == ']') {
        width = 1;
        return true;
    }
    // U+201D right double quote, U+2019 right single quote.
    if (text.compare(pos, 3, "\xE2\x80\x9D") == 0 || text.compare(pos, 3, "\xE2\x80\x99") == 0) {
        width = 3;
        return true;
    }
    return false;
}

bool is_lower_cased_letter(char32_t cp)
{
    if (cp >= 0xDF && cp <= 0xFF && cp != 0xF7) return true;     // Latin-1 lowercase
    if (cp >= 0x100 && cp <= 0x17F) return cp % 2 == 1;          // Latin Extended-A (mostly paired)
    if (cp >= 0x3AC && cp <= 0x3CE) return true;                 // Greek lowercase
    if (cp >= 0x430 && cp <= 0x45F) return true;                 // Cyrillic lowercase
    return false;
}

bool can_start_sentence(char32_t cp)
{
    if (cp < 0x80) {
        const auto c = static_cast<unsigned char>(cp);
        return std::isupper(c) || std::isdigit(c) || c == '"' || c == '\'' || c == '(' || c == '[';
    }
    return !is_lower_cased_letter(cp);
}

const std::set<std::string>& abbreviations()
{
    static const std::set<std::string> list = {
        "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.", "sr.", "vs.", "etc.", "e.g.", "i.e.", "inc.", "ltd.",
        "co.", "corp.", "no.", "u.s.", "u.k.", "mt.", "ft.", "gen.", "col.", "lt.", "sgt.", "rev.", "fig.", "approx.",
        "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.", "oct.", "nov.", "dec.",
    };
    return list;
}

/// Word that ends at `end` (exclusive), starting after the previous space.
std::string word_before(std::string_view text, std::size_t sentence_start, std::size_t end)
{
    std::size_t begin = end;
    while (begin > sentence_start && !std::isspace(static_cast<unsigned char>(text[begin - 1]))) --begin;
    std::string word(text.substr(begin, end - begin));
    // Strip leading opening punctuation.
    while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '\'' || word.front() == '[')) {
        word.erase(word.begin());
    }
    return word;
}

bool is_abbreviation(std::string word)
{
    // Single-letter initial such as "J."
    if (word.size() == 2 && std::isupper(static_cast<unsigned char>(word[0])) && word[1] == '.') return true;
    for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return abbreviations().count(word) != 0;
}

}  // namespace

std::vector<SentenceSpan> split_sentences(std::string_view text)
{
    std::vector<SentenceSpan> spans;
    auto skip_space = [&](std::size_t pos) {
        while (pos < text.size()) {
            std::size_t next = pos;
            if (!utf8::is_space(utf8::decode(text, next))) break;
            pos = next;
        }
        return pos;
    };
    auto last_non_space = [&](std::size_t begin, std::size_t end) {
        while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
        return end;
    };

    std::size_t start = skip_space(0);
    std::size_t pos = start;
    while (pos < text.size()) {
        if (!is_terminal(text[pos])) {
            ++pos;
            continue;
        }
        std::size_t end = pos;
        while (end < text.size() && is_terminal(text[end])) ++end;
        const bool single_period = end == pos + 1 && text[pos] == '.';
        std::size_t width = 0;
        while (end < text.size() && is_closing(text, end, width)) end += width;

        std::size_t next = end;
        if (next >= text.size()) break;
        std::size_t probe = next;
        if (!utf8::is_space(utf8::decode(text, probe))) {
            pos = end;
            continue;
        }
        const std::size_t following = skip_space(next);
        if (following >= text.size()) break;
        std::size_t cp_pos = following;
        const char32_t first = utf8::decode(text, cp_pos);
        const bool boundary = can_start_sentence(first) && !(single_period && is_abbreviation(word_before(text, start, pos + 1)));
        if (boundary) {
            spans.push_back({"", spans.size(), start, end});
            start = following;
        }
        pos = following;
    }
    if (start < text.size()) {
        const std::size_t end = last_non_space(start, text.size());
        if (end > start) spans.push_back({"", spans.size(), start, end});
    }
    return spans;
}

namespace {

/// Byte offset of the `cp_index`-th code point, or npos when out of range.
std::size_t byte_offset_of(std::string_view text, std::size_t cp_index)
{
    std::size_t pos = 0;
    for (std::size_t i = 0; i < cp_index; ++i) {
        if (pos >= text.size()) return std::string_view::npos;
        utf8::decode(text, pos);
    }
    return pos < text.size() ? pos : std::string_view::npos;
}

}  // namespace

std::vector<SquadDocument> parse_squad(std::string_view json, const std::string& source)
{
    std::vector<SquadDocument> docs;
    try {
        const auto root = nlohmann::json::parse(json);
        for (const auto& d : root.at("data")) {
            SquadDocument doc;
            doc.title = d.value("title", "");
            for (const auto& p : d.at("paragraphs")) {
                SquadParagraph para;
                para.context = p.at("context").get<std::string>();
                for (const auto& qa : p.at("qas")) {
                    SquadQuestion q;
                    q.id = qa.at("id").get<std::string>();
                    q.question = qa.at("question").get<std::string>();
                    const auto& answers = qa.at("answers");
                    if (answers.empty()) throw DataError(source + ": question '" + q.id + "' has no answers");
                    q.answer_text = answers[0].at("text").get<std::string>();
                    const auto cp = answers[0].at("answer_start").get<long long>();
                    const std::size_t bytes = cp < 0 ? std::string_view::npos : byte_offset_of(para.context, static_cast<std::size_t>(cp));
                    if (bytes == std::string_view::npos) {
                        throw DataError(source + ": document '" + doc.title + "', question '" + q.id + "': answer_start "
                                        + std::to_string(cp) + " lies outside its paragraph");
                    }
                    q.answer_start = bytes;
                    para.qas.push_back(std::move(q));
                }
                doc.paragraphs.push_back(std::move(para));
            }
            docs.push_back(std::move(doc));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(source + ": malformed SQuAD JSON: " + e.what());
    }
    return docs;
}

std::vector<SquadDocument> load_squad(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open SQuAD file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_squad(buffer.str(), path);
}

RetrievalTaskSpec build_reqa(std::span<const SquadDocument> docs, ReqaLevel level)
{
    RetrievalTaskSpec task;
    task.kind = "reqa";
    task.language_pair = "en-en";
    task.level = level == ReqaLevel::sentence ? "sentence" : "paragraph";
    std::set<std::string> query_ids;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        for (std::size_t p = 0; p < docs[d].paragraphs.size(); ++p) {
            const auto& para = docs[d].paragraphs[p];
            const std::string pid = "d" + std::to_string(d) + ".p" + std::to_string(p);
            const auto spans = split_sentences(para.context);
            if (level == ReqaLevel::paragraph) {
                task.candidates.push_back({pid, para.context, {}});
            } else {
                for (const auto& s : spans) {
                    const std::string sid = pid + ".s" + std::to_string(s.index);
                    task.candidates.push_back({sid, para.context.substr(s.start, s.end - s.start), para.context});
                    task.candidate_groups[sid] = pid;
                }
            }
            for (const auto& q : para.qas) {
                if (q.answer_start >= para.context.size()) {
                    throw DataError("build_reqa: document " + std::to_string(d) + " ('" + docs[d].title + "'), question '"
                                    + q.id + "': answer offset " + std::to_string(q.answer_start) + " outside paragraph");
                }
                if (!query_ids.insert(q.id).second) throw DataError("build_reqa: duplicate question id '" + q.id + "'");
                std::string target = pid;
                if (level == ReqaLevel::sentence) {
                    if (spans.empty()) throw DataError("build_reqa: question '" + q.id + "' refers to an empty paragraph");
                    std::size_t hit = 0;
                    for (std::size_t k = 0; k < spans.size(); ++k) {
                        if (spans[k].start <= q.answer_start) hit = k;
                    }
                    target = pid + ".s" + std::to_string(hit);
                }
                task.queries.push_back({q.id, q.question, {}});
                task.relevance[q.id] = {target};
            }
        }
    }
    return task;
}

ResultList paragraph_by_nearest_sentence(const ResultList& sentence_results,
                                         const std::map<std::string, std::string>& sentence_to_paragraph)
{
    ResultList out;
    std::set<std::string> seen;
    for (const auto& r : sentence_results) {
        auto it = sentence_to_paragraph.find(r.id);
        if (it == sentence_to_paragraph.end()) {
            throw InvalidArgument("paragraph_by_nearest_sentence: sentence '" + r.id + "' has no paragraph");
        }
        if (seen.insert(it->second).second) out.push_back({it->second, r.score, out.size() + 1});
    }
    return out;
}

RetrievalTaskSpec build_bitext_task(std::span<const std::pair<std::string, std::string>> pairs, BitextDirection direction,
                                    const std::string& language_pair)
{
    if (pairs.empty()) throw InvalidArgument("build_bitext_task: no pairs");
    RetrievalTaskSpec task;
    task.kind = "bitext";
    task.level = "sentence";
    task.language_pair = language_pair;
    const bool forward = direction == BitextDirection::source_to_target;
    if (!forward) {
        const auto dash = language_pair.find('-');
        if (dash != std::string::npos) task.language_pair = language_pair.substr(dash + 1) + "-" + language_pair.substr(0, dash);
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& [src, tgt] = pairs[i];
        const std::string qid = "q" + std::to_string(i);
        const std::string cid = "c" + std::to_string(i);
        task.queries.push_back({qid, forward ? src : tgt, {}});
        task.candidates.push_back({cid, forward ? tgt : src, {}});
        task.relevance[qid] = {cid};
    }
    return task;
}

std::vector<bool> backtranslation_filter(const Tensor<float>& original, const Tensor<float>& backtranslated, double threshold)
{
    if (original.rank() != 2 || original.shape() != backtranslated.shape()) {
        throw InvalidArgument("backtranslation_filter: shapes " + to_string(original.shape()) + " and "
                              + to_string(backtranslated.shape()) + " differ");
    }
    const std::size_t n = original.dim(0), d = original.dim(1);
    std::vector<bool> keep(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const float> a(original.data() + i * d, d), b(backtranslated.data() + i * d, d);
        keep[i] = cosine_similarity(a, b) >= threshold;
    }
    return keep;
}

RetrievalTaskSpec make_cross_lingual(const RetrievalTaskSpec& task, const std::map<std::string, std::string>& translations,
                                     const std::string& query_language)
{
    std::set<std::string> known;
    for (const auto& q : task.queries) known.insert(q.id);
    for (const auto& [qid, text] : translations) {
        if (!known.count(qid)) throw DataError("cross-lingual: translation for unknown query '" + qid + "'");
    }
    RetrievalTaskSpec out = task;
    out.queries.clear();
    out.relevance.clear();
    for (const auto& q : task.queries) {
        auto it = translations.find(q.id);
        if (it == translations.end()) continue;
        out.queries.push_back({q.id, it->second, q.context});
        out.relevance[q.id] = task.relevance.at(q.id);
    }
    const auto dash = task.language_pair.find('-');
    const std::string candidate_side = dash == std::string::npos ? task.language_pair : task.language_pair.substr(dash + 1);
    out.language_pair = query_language + "-" + candidate_side;
    return out;
}

}  // namespace muse
