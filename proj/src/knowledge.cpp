#include "kobe/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace kobe {

std::string fold_case(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void KnowledgeBase::add(const std::string& entity, Entry entry) {
    if (entity.empty()) throw ContractError("knowledge entity key is empty");
    if (entry.empty()) throw ContractError("knowledge entry for '" + entity + "' is empty");
    entries_[fold_case(entity)].push_back(std::move(entry));
}

const std::vector<KnowledgeBase::Entry>* KnowledgeBase::find(const std::string& token) const {
    auto it = entries_.find(fold_case(token));
    return it == entries_.end() ? nullptr : &it->second;
}

size_t KnowledgeBase::n_entries() const {
    size_t n = 0;
    for (const auto& [k, v] : entries_) n += v.size();
    return n;
}

KnowledgeBase parse_kb(const std::string& text, const std::string& name) {
    KnowledgeBase kb;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(name + ":" + std::to_string(lineno) + ": expected entity<TAB>tokens");
        const std::string entity = line.substr(0, tab);
        std::istringstream toks(line.substr(tab + 1));
        KnowledgeBase::Entry entry;
        std::string tok;
        while (toks >> tok) entry.push_back(tok);
        if (entity.empty() || entry.empty())
            throw ParseError(name + ":" + std::to_string(lineno) + ": empty entity or entry");
        kb.add(entity, std::move(entry));
    }
    return kb;
}

KnowledgeBase load_kb(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open knowledge base " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_kb(buf.str(), path);
}

namespace {
// First `take` positions of a partial Fisher-Yates over [0, n), then sorted
// ascending so the selection keeps the pool's own order.
std::vector<size_t> sample_indices(Rng& rng, size_t n, size_t take) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < take; ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    return idx;
}

void append_entry(std::vector<std::string>& out, const KnowledgeBase::Entry& entry) {
    if (!out.empty()) out.push_back("<SEP>");
    out.insert(out.end(), entry.begin(), entry.end());
}
}  // namespace

std::vector<std::string> retrieve(const std::vector<std::string>& x, const KnowledgeBase& kb, uint64_t seed,
                                  int k, bool per_entity) {
    if (k < 1) throw ConfigError("retrieval k must be >= 1");

    // Matched entities in first-appearance title order, each counted once.
    std::vector<const std::vector<KnowledgeBase::Entry>*> matched;
    std::unordered_set<std::string> seen;
    for (const auto& tok : x) {
        const std::string key = fold_case(tok);
        if (!seen.insert(key).second) continue;
        if (const auto* lists = kb.find(key)) matched.push_back(lists);
    }
    if (matched.empty()) return {};

    Rng rng(seed);
    std::vector<std::string> out;
    if (per_entity) {
        for (const auto* lists : matched) {
            const size_t take = std::min<size_t>(k, lists->size());
            for (size_t i : sample_indices(rng, lists->size(), take)) append_entry(out, (*lists)[i]);
        }
        return out;
    }

    // One pool across all matched entities, laid out in title order so the
    // sorted sample concatenates "according to their original order".
    std::vector<const KnowledgeBase::Entry*> pool;
    for (const auto* lists : matched)
        for (const auto& e : *lists) pool.push_back(&e);
    const size_t take = std::min<size_t>(k, pool.size());
    for (size_t i : sample_indices(rng, pool.size(), take)) append_entry(out, *pool[i]);
    return out;
}

}  // namespace kobe
