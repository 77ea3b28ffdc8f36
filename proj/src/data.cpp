#include "kobe/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "kobe/params.hpp"

namespace kobe {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Attribute schema

AttributeSchema AttributeSchema::with_unknown(std::vector<std::string> aspect_names,
                                              std::vector<std::string> category_names) {
    AttributeSchema s;
    s.aspects = std::move(aspect_names);
    s.categories.reserve(category_names.size() + 1);
    s.categories.push_back("<unk-category>");
    for (auto& c : category_names) s.categories.push_back(std::move(c));
    return s;
}

int AttributeSchema::aspect_id(const std::string& name) const {
    for (size_t i = 0; i < aspects.size(); ++i)
        if (aspects[i] == name) return static_cast<int>(i);
    return -1;
}

int AttributeSchema::category_id(const std::string& name) const {
    for (size_t i = 0; i < categories.size(); ++i)
        if (categories[i] == name) return static_cast<int>(i);
    return 0;
}

AttributeSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("schema " + path + ": " + e.what());
    }
    AttributeSchema s;
    s.aspects = j.at("aspects").get<std::vector<std::string>>();
    s.categories = j.at("categories").get<std::vector<std::string>>();
    if (s.categories.empty() || s.categories[0] != "<unk-category>")
        throw ParseError("schema " + path + ": categories[0] must be <unk-category>");
    return s;
}

void save_schema(const std::string& path, const AttributeSchema& schema) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write schema file " + path);
    ordered_json j;
    j["aspects"] = schema.aspects;
    j["categories"] = schema.categories;
    out << j.dump(2) << "\n";
}

std::string aspect_token(int aspect_id) { return "<A-" + std::to_string(aspect_id + 1) + ">"; }
std::string user_token(int category_id) { return "<U-" + std::to_string(category_id + 1) + ">"; }

std::vector<std::string> attribute_source_tokens(int n_aspects, int n_categories) {
    std::vector<std::string> toks;
    toks.reserve(n_aspects + n_categories);
    for (int i = 0; i < n_aspects; ++i) toks.push_back(aspect_token(i));
    for (int i = 0; i < n_categories; ++i) toks.push_back(user_token(i));
    return toks;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
    tokens_ = {"<PAD>", "<UNK>", "<BOS>", "<EOS>", "<SEP>"};
    for (size_t i = 0; i < tokens_.size(); ++i) to_id_.emplace(tokens_[i], static_cast<int>(i));
}

Vocab Vocab::build(const std::vector<const std::vector<std::string>*>& streams, int min_freq,
                   const std::vector<std::string>& extra_reserved) {
    Vocab v;
    for (const auto& tok : extra_reserved) {
        if (v.to_id_.count(tok)) throw ContractError("reserved token '" + tok + "' duplicated");
        v.to_id_.emplace(tok, v.size());
        v.tokens_.push_back(tok);
    }

    std::unordered_map<std::string, long> counts;
    for (const auto* stream : streams)
        for (const auto& tok : *stream) ++counts[tok];

    // Descending frequency, ties broken lexicographically, for a stable id
    // assignment independent of hash order.
    std::vector<std::pair<long, std::string>> order;
    order.reserve(counts.size());
    for (auto& [tok, c] : counts)
        if (c >= min_freq && !v.to_id_.count(tok)) order.emplace_back(-c, tok);
    std::sort(order.begin(), order.end());
    for (auto& [negc, tok] : order) {
        v.to_id_.emplace(tok, v.size());
        v.tokens_.push_back(tok);
    }
    return v;
}

int Vocab::id(const std::string& token) const {
    auto it = to_id_.find(token);
    return it == to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw ContractError("token id " + std::to_string(id) + " outside vocab of " +
                                                    std::to_string(size()));
    return tokens_[id];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::vector<int> Vocab::encode_target(const std::vector<std::string>& tokens) const {
    std::vector<int> ids = encode(tokens);
    ids.push_back(kEosId);
    return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
    std::vector<std::string> toks;
    toks.reserve(ids.size());
    for (int i : ids) toks.push_back(token(i));
    return toks;
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocab file " + path);
    Vocab v;
    v.tokens_.clear();
    v.to_id_.clear();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) throw ParseError(path + ":" + std::to_string(lineno) + ": empty vocab line");
        if (v.to_id_.count(line))
            throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate token '" + line + "'");
        v.to_id_.emplace(line, v.size());
        v.tokens_.push_back(line);
    }
    if (v.size() < kNumReservedIds || v.tokens_[kPadId] != "<PAD>" || v.tokens_[kUnkId] != "<UNK>" ||
        v.tokens_[kBosId] != "<BOS>" || v.tokens_[kEosId] != "<EOS>" || v.tokens_[kSepId] != "<SEP>")
        throw ParseError(path + ": reserved tokens missing or out of order");
    return v;
}

void save_vocab(const std::string& path, const Vocab& vocab) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocab file " + path);
    for (const auto& t : vocab.tokens()) out << t << "\n";
}

uint64_t vocab_hash(const Vocab& vocab) {
    // Chain the per-token hashes so both content and order matter; hash the
    // token (not its bytes concatenated with neighbours) to keep "ab","c"
    // distinct from "a","bc".
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& t : vocab.tokens()) {
        h ^= fnv1a(t);
        h *= 0x100000001b3ull;
    }
    return h;
}

EncodedInstance encode_instance(const Instance& inst, const Vocab& src, const Vocab& tgt) {
    EncodedInstance e;
    e.x = src.encode(inst.x);
    e.w = src.encode(inst.w);
    e.y = tgt.encode(inst.y);
    e.a1 = inst.a1;
    e.a2 = inst.a2;
    return e;
}

std::vector<EncodedInstance> encode_dataset(const std::vector<Instance>& data, const Vocab& src,
                                            const Vocab& tgt) {
    std::vector<EncodedInstance> out;
    out.reserve(data.size());
    for (const auto& inst : data) out.push_back(encode_instance(inst, src, tgt));
    return out;
}

// ---------------------------------------------------------------------------
// JSONL dataset io

std::vector<Instance> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path);
    std::vector<Instance> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            Instance inst;
            inst.product_id = j.at("product_id").get<std::string>();
            inst.x = j.at("x").get<std::vector<std::string>>();
            inst.y = j.at("y").get<std::vector<std::string>>();
            if (j.contains("w")) inst.w = j.at("w").get<std::vector<std::string>>();
            if (j.contains("a1")) inst.a1 = j.at("a1").get<int>();
            if (j.contains("a2")) inst.a2 = j.at("a2").get<int>();
            out.push_back(std::move(inst));
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void save_jsonl(const std::string& path, const std::vector<Instance>& instances) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset " + path);
    for (const auto& inst : instances) {
        ordered_json j;
        j["product_id"] = inst.product_id;
        j["x"] = inst.x;
        j["y"] = inst.y;
        j["a1"] = inst.a1;
        j["a2"] = inst.a2;
        j["w"] = inst.w;
        out << j.dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// Preprocessing

namespace {
void substitute_rare(std::vector<std::string>& tokens, const Vocab& vocab) {
    for (auto& t : tokens)
        if (!vocab.contains(t)) t = "<UNK>";
}
}  // namespace

PreprocessResult preprocess(std::vector<Instance> records, const SplitRatios& ratios, uint64_t seed, int min_freq,
                            const std::vector<std::string>& extra_src_reserved, int max_title, int max_desc) {
    if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-6)
        throw ConfigError("split ratios must be nonnegative and sum to 1");

    PreprocessResult res;
    std::vector<Instance> kept;
    kept.reserve(records.size());
    for (auto& r : records) {
        const bool ok = !r.x.empty() && !r.y.empty() && r.x.size() <= static_cast<size_t>(max_title) &&
                        r.y.size() <= static_cast<size_t>(max_desc);
        if (ok)
            kept.push_back(std::move(r));
        else
            ++res.dropped;
    }
    if (kept.empty()) throw ContractError("corpus is empty after preprocessing");

    std::vector<const std::vector<std::string>*> src_streams, tgt_streams;
    for (const auto& r : kept) {
        src_streams.push_back(&r.x);
        if (!r.w.empty()) src_streams.push_back(&r.w);
        tgt_streams.push_back(&r.y);
    }
    res.src_vocab = Vocab::build(src_streams, min_freq, extra_src_reserved);
    res.tgt_vocab = Vocab::build(tgt_streams, min_freq);

    for (auto& r : kept) {
        substitute_rare(r.x, res.src_vocab);
        substitute_rare(r.w, res.src_vocab);
        substitute_rare(r.y, res.tgt_vocab);
    }

    // Split by product so no product id straddles two splits.
    std::vector<std::string> product_order;
    std::unordered_set<std::string> seen;
    for (const auto& r : kept)
        if (seen.insert(r.product_id).second) product_order.push_back(r.product_id);
    Rng rng(seed);
    rng.shuffle(product_order);

    const size_t n = product_order.size();
    const size_t n_train = static_cast<size_t>(ratios.train * n);
    const size_t n_valid = static_cast<size_t>(ratios.valid * n);
    std::unordered_map<std::string, int> split_of;  // 0 train, 1 valid, 2 test
    for (size_t i = 0; i < n; ++i) split_of[product_order[i]] = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);

    for (auto& r : kept) {
        switch (split_of[r.product_id]) {
            case 0: res.train.push_back(std::move(r)); break;
            case 1: res.valid.push_back(std::move(r)); break;
            default: res.test.push_back(std::move(r)); break;
        }
    }

    // The by-product rule is structural; verify anyway so a refactor cannot
    // silently break it.
    std::unordered_set<std::string> train_ids, valid_ids;
    for (const auto& r : res.train) train_ids.insert(r.product_id);
    for (const auto& r : res.valid) valid_ids.insert(r.product_id);
    for (const auto& r : res.valid)
        if (train_ids.count(r.product_id)) throw ContractError("product " + r.product_id + " straddles splits");
    for (const auto& r : res.test)
        if (train_ids.count(r.product_id) || valid_ids.count(r.product_id))
            throw ContractError("product " + r.product_id + " straddles splits");
    return res;
}

}  // namespace kobe
