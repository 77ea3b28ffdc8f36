#include <cstdio>
#include <unordered_set>

#include "kobe/data.hpp"
#include "kobe/knowledge.hpp"

// Synthetic corpus generator. Every instance follows one template:
//   title        = modifier modifier noun
//   description  = aspect adjectives, the noun, a user-category phrase, and
//                  (usually) a paraphrase of the first retrieved knowledge
//                  segment
// so the conditioning signals are recoverable by construction: the aspect
// from its adjectives, the category from its phrase, the knowledge from the
// stored w. Products sharing a noun differ in modifiers and in which
// knowledge entries retrieval sampled for them.

namespace kobe {

GenConfig GenConfig::defaults() {
    GenConfig g;
    g.nouns = {"lamp", "desk", "chair", "vase", "rug", "clock", "shelf", "kettle", "mirror", "stool"};
    g.modifiers = {"nordic", "vintage", "modern", "compact", "mini", "classic", "deluxe", "urban", "retro",
                   "grand"};
    g.aspect_names = {"appearance", "texture", "function"};
    g.aspect_lexicons = {
        {"sleek", "shiny", "glossy", "colorful", "stylish", "graceful", "polished", "dazzling"},
        {"soft", "gentle", "smooth", "comfortable", "plush", "silky", "cozy", "tender"},
        {"practical", "durable", "sturdy", "versatile", "efficient", "reliable", "convenient", "spacious"},
    };
    g.category_names = {"value-seeker", "quality-buyer", "trend-follower", "homemaker"};
    g.category_phrases = {
        {{"a", "real", "bargain", "buy"}, {"budget", "friendly", "price", "tag"}},
        {{"built", "to", "last", "years"}, {"premium", "craftsmanship", "throughout"}},
        {{"this", "seasons", "favorite", "pick"}, {"trending", "across", "town"}},
        {{"perfect", "for", "family", "rooms"}, {"makes", "houses", "feel", "lived", "in"}},
    };
    g.materials = {"oak", "steel", "ceramic", "cotton", "bamboo", "glass", "copper", "linen", "marble",
                   "walnut"};
    g.features = {"finish", "frame", "base", "cover", "handle", "surface", "coating", "joint"};
    return g;
}

namespace {

constexpr int kMinLexicon = 8;

void validate_banks(const GenConfig& cfg) {
    if (cfg.n_products < 1 || cfg.instances_per_product < 1)
        throw ConfigError("generator needs at least one product and one instance per product");
    if (cfg.nouns.empty() || cfg.modifiers.size() < 2) throw ConfigError("generator word banks too small");
    if (cfg.aspect_names.empty() || cfg.category_names.empty())
        throw ConfigError("generator needs at least one aspect and one category");
    if (cfg.aspect_lexicons.size() != cfg.aspect_names.size() ||
        cfg.category_phrases.size() != cfg.category_names.size())
        throw ConfigError("aspect/category banks out of step with their name lists");
    for (const auto& lex : cfg.aspect_lexicons)
        if (static_cast<int>(lex.size()) < kMinLexicon)
            throw ConfigError("aspect lexicon smaller than the minimum of " + std::to_string(kMinLexicon));
    for (const auto& bank : cfg.category_phrases)
        if (bank.empty()) throw ConfigError("category phrase bank is empty");
    if (cfg.materials.empty() || cfg.features.empty()) throw ConfigError("knowledge word banks empty");
    if (cfg.knowledge_per_noun < 1 || cfg.retrieval_k < 1)
        throw ConfigError("knowledge sizing must be positive");
    if (cfg.knowledge_rate < 0.0 || cfg.knowledge_rate > 1.0)
        throw ConfigError("knowledge rate must lie in [0, 1]");

    // The aspect-recoverability guarantee needs the lexicons disjoint from
    // each other and from every other word source.
    std::unordered_set<std::string> lexicon_words;
    for (const auto& lex : cfg.aspect_lexicons)
        for (const auto& wd : lex)
            if (!lexicon_words.insert(wd).second)
                throw ConfigError("adjective '" + wd + "' appears in two aspect lexicons");
    auto check_free = [&](const std::string& wd, const char* bank) {
        if (lexicon_words.count(wd))
            throw ConfigError(std::string(bank) + " word '" + wd + "' collides with an aspect lexicon");
    };
    for (const auto& wd : cfg.nouns) check_free(wd, "noun");
    for (const auto& wd : cfg.modifiers) check_free(wd, "modifier");
    for (const auto& wd : cfg.materials) check_free(wd, "material");
    for (const auto& wd : cfg.features) check_free(wd, "feature");
    for (const auto& bank : cfg.category_phrases)
        for (const auto& phrase : bank)
            for (const auto& wd : phrase) check_free(wd, "category phrase");
}

// Distinct random picks from [0, n), in draw order.
std::vector<int> pick_distinct(Rng& rng, int n, int count) {
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    rng.shuffle(all);
    all.resize(count);
    return all;
}

std::vector<std::string> first_segment(const std::vector<std::string>& w) {
    std::vector<std::string> seg;
    for (const auto& tok : w) {
        if (tok == "<SEP>") break;
        seg.push_back(tok);
    }
    return seg;
}

}  // namespace

SynthOutput synth_generate(const GenConfig& cfg, uint64_t seed) {
    validate_banks(cfg);
    SynthOutput out;
    out.schema = AttributeSchema::with_unknown(cfg.aspect_names, cfg.category_names);
    out.aspect_lexicons = cfg.aspect_lexicons;

    // Knowledge base: knowledge_per_noun entries per noun, content rotated
    // through the material/feature banks so entries stay distinct.
    const int n_nouns = static_cast<int>(cfg.nouns.size());
    for (int ni = 0; ni < n_nouns; ++ni)
        for (int j = 0; j < cfg.knowledge_per_noun; ++j) {
            const std::string& mat = cfg.materials[(ni + j * 3) % cfg.materials.size()];
            const std::string& feat = cfg.features[(ni * 2 + j) % cfg.features.size()];
            out.kb_tsv += cfg.nouns[ni] + "\tmade of " + mat + " with a " + feat + "\n";
        }
    const KnowledgeBase kb = parse_kb(out.kb_tsv, "<synth-kb>");

    Rng rng(seed);
    const int n_aspects = cfg.n_aspects();
    const int n_categories = cfg.n_categories();
    const int n_combos = n_aspects * n_categories;
    int combo_counter = 0;

    out.corpus.reserve(static_cast<size_t>(cfg.n_products) * cfg.instances_per_product);
    for (int p = 0; p < cfg.n_products; ++p) {
        const std::string& noun = cfg.nouns[p % n_nouns];
        const auto mods = pick_distinct(rng, static_cast<int>(cfg.modifiers.size()), 2);
        const std::vector<std::string> title = {cfg.modifiers[mods[0]], cfg.modifiers[mods[1]], noun};
        char pid[16];
        std::snprintf(pid, sizeof(pid), "p%05d", p);

        for (int i = 0; i < cfg.instances_per_product; ++i) {
            Instance inst;
            inst.product_id = pid;
            inst.x = title;
            const int combo = combo_counter++ % n_combos;
            inst.a1 = combo / n_categories;
            inst.a2 = 1 + combo % n_categories;  // schema id; 0 is the unknown

            inst.w = retrieve(title, kb, rng.next(), cfg.retrieval_k);

            const auto& lex = cfg.aspect_lexicons[inst.a1];
            const int n_adj = 2 + static_cast<int>(rng.below(2));
            for (int adj : pick_distinct(rng, static_cast<int>(lex.size()), n_adj)) inst.y.push_back(lex[adj]);
            inst.y.push_back(noun);
            const auto& bank = cfg.category_phrases[inst.a2 - 1];
            const auto& phrase = bank[rng.below(bank.size())];
            inst.y.insert(inst.y.end(), phrase.begin(), phrase.end());
            if (!inst.w.empty() && rng.uniform() < cfg.knowledge_rate) {
                const auto seg = first_segment(inst.w);
                inst.y.insert(inst.y.end(), seg.begin(), seg.end());
            }
            out.corpus.push_back(std::move(inst));
        }
    }

    // Click-log analogue: short feedback texts whose category phrase is the
    // label signal; stray adjectives act as distractors the classifier must
    // learn to ignore.
    const int n_feedback = cfg.feedback_items > 0 ? cfg.feedback_items : cfg.n_products;
    for (int f = 0; f < n_feedback; ++f) {
        Instance fb;
        const int p = static_cast<int>(rng.below(cfg.n_products));
        char pid[16];
        std::snprintf(pid, sizeof(pid), "p%05d", p);
        fb.product_id = pid;
        const std::string& noun = cfg.nouns[p % n_nouns];
        fb.x = {noun};
        fb.a2 = 1 + f % n_categories;
        const int stray = static_cast<int>(rng.below(3));
        for (int s = 0; s < stray; ++s) {
            const auto& lex = cfg.aspect_lexicons[rng.below(n_aspects)];
            fb.y.push_back(lex[rng.below(lex.size())]);
        }
        fb.y.push_back(noun);
        const auto& bank = cfg.category_phrases[fb.a2 - 1];
        const auto& phrase = bank[rng.below(bank.size())];
        fb.y.insert(fb.y.end(), phrase.begin(), phrase.end());
        out.feedback.push_back(std::move(fb));
    }
    return out;
}

}  // namespace kobe
