#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kobe/errors.hpp"
#include "kobe/rng.hpp"
#include "kobe/special_ids.hpp"

namespace kobe {

// One example: title tokens x, description tokens y, attribute pair (a1
// aspect, a2 user category, -1 until annotated), retrieved knowledge tokens w.
struct Instance {
    std::string product_id;
    std::vector<std::string> x;
    std::vector<std::string> y;
    std::vector<std::string> w;
    int a1 = -1;
    int a2 = -1;

    bool operator==(const Instance& o) const {
        return product_id == o.product_id && x == o.x && y == o.y && w == o.w && a1 == o.a1 && a2 == o.a2;
    }
};

// Aspect set A1 and user-category set A2. Category id 0 is reserved for
// "unknown" so unpruned/unmatched categories always have a home.
struct AttributeSchema {
    std::vector<std::string> aspects;
    std::vector<std::string> categories;  // categories[0] == "<unk-category>"

    static AttributeSchema with_unknown(std::vector<std::string> aspect_names,
                                        std::vector<std::string> category_names);
    int aspect_id(const std::string& name) const;    // -1 when absent
    int category_id(const std::string& name) const;  // 0 (unknown) when absent
    int n_aspects() const { return static_cast<int>(aspects.size()); }
    int n_categories() const { return static_cast<int>(categories.size()); }
};

AttributeSchema load_schema(const std::string& path);
void save_schema(const std::string& path, const AttributeSchema& schema);

// Source-side reserved tokens naming the attributes, aspect tokens first:
// <A-1>.. then <U-1>.. (ids are 1-based in the surface form).
std::string aspect_token(int aspect_id);
std::string user_token(int category_id);
std::vector<std::string> attribute_source_tokens(int n_aspects, int n_categories);

// Token <-> id bijection. Ids 0..4 are the reserved specials of
// special_ids.hpp, followed by caller-supplied reserved tokens, followed by
// corpus tokens ordered by descending frequency (ties lexicographic).
class Vocab {
  public:
    Vocab();

    static Vocab build(const std::vector<const std::vector<std::string>*>& streams, int min_freq,
                       const std::vector<std::string>& extra_reserved = {});

    int id(const std::string& token) const;  // kUnkId when absent
    const std::string& token(int id) const;
    bool contains(const std::string& token) const { return to_id_.count(token) != 0; }
    int size() const { return static_cast<int>(tokens_.size()); }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    std::vector<int> encode_target(const std::vector<std::string>& tokens) const;  // appends <EOS>
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    const std::vector<std::string>& tokens() const { return tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> to_id_;
    friend Vocab load_vocab(const std::string& path);
};

Vocab load_vocab(const std::string& path);
void save_vocab(const std::string& path, const Vocab& vocab);

// Fingerprint of a vocabulary's exact token order, stored in checkpoints so
// a model is never resumed against re-built, differently-ordered ids.
uint64_t vocab_hash(const Vocab& vocab);

// An instance mapped to model ids: title/knowledge under the source vocab,
// description under the target vocab (no begin/end markers).
struct EncodedInstance {
    std::vector<int> x, w, y;
    int a1 = -1, a2 = -1;
};

EncodedInstance encode_instance(const Instance& inst, const Vocab& src, const Vocab& tgt);
std::vector<EncodedInstance> encode_dataset(const std::vector<Instance>& data, const Vocab& src,
                                            const Vocab& tgt);

// JSONL dataset io: one object per line with product_id, x, y, a1, a2, w.
std::vector<Instance> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<Instance>& instances);

struct SplitRatios {
    double train = 0.90, valid = 0.05, test = 0.05;
};

struct PreprocessResult {
    std::vector<Instance> train, valid, test;
    Vocab src_vocab;  // titles + knowledge
    Vocab tgt_vocab;  // descriptions
    size_t dropped = 0;
};

// Appendix-style preprocessing: drop overlong records (title > 100 or
// description > 150 tokens), replace corpus-wide rare tokens (< min_freq)
// with <UNK> in place, and split by product id so no product straddles
// splits. extra_src_reserved lets callers reserve attribute tokens.
PreprocessResult preprocess(std::vector<Instance> records, const SplitRatios& ratios, uint64_t seed,
                            int min_freq = 5, const std::vector<std::string>& extra_src_reserved = {},
                            int max_title = 100, int max_desc = 150);

// ---------------------------------------------------------------------------
// Synthetic corpus generation (desk-scale stand-in for a crawled corpus).

// Word banks plus sizing knobs. The banks must keep the per-aspect adjective
// lexicons pairwise disjoint and free of every other bank's words: the
// generator guarantees each description contains tokens of its own aspect's
// lexicon and none of the others, and validation enforces the disjointness
// that guarantee rests on.
struct GenConfig {
    int n_products = 500;
    int instances_per_product = 4;  // distinct attribute pairs per title
    int knowledge_per_noun = 6;     // KB entries per product noun
    double knowledge_rate = 1.0;    // fraction of descriptions that use knowledge
    int retrieval_k = 3;            // entries sampled into w per instance
    int feedback_items = 0;         // 0: one per product

    std::vector<std::string> nouns;
    std::vector<std::string> modifiers;  // title words distinguishing products
    std::vector<std::string> aspect_names;
    std::vector<std::vector<std::string>> aspect_lexicons;  // >= 8 adjectives each
    std::vector<std::string> category_names;                // without the reserved unknown
    std::vector<std::vector<std::vector<std::string>>> category_phrases;  // phrase bank per category
    std::vector<std::string> materials, features;           // knowledge-entry content words

    static GenConfig defaults();
    int n_aspects() const { return static_cast<int>(aspect_names.size()); }
    int n_categories() const { return static_cast<int>(category_names.size()); }
};

struct SynthOutput {
    std::vector<Instance> corpus;  // gold a1/a2 filled, w filled via retrieval
    std::string kb_tsv;            // knowledge-store file contents
    AttributeSchema schema;        // categories[0] is the reserved unknown
    std::vector<std::vector<std::string>> aspect_lexicons;  // gold per-aspect adjective lists
    std::vector<Instance> feedback;  // click-log analogue: y is feedback text, a2 its gold category
};

SynthOutput synth_generate(const GenConfig& cfg, uint64_t seed);

}  // namespace kobe
