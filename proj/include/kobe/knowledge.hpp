#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "kobe/errors.hpp"
#include "kobe/rng.hpp"

namespace kobe {

// Entity-indexed knowledge store. Keys are case-folded entity surface forms;
// each key owns an ordered list of entries, an entry being one token
// sequence. Immutable after load, safe for concurrent reads.
class KnowledgeBase {
  public:
    using Entry = std::vector<std::string>;

    // Appends an entry under the (folded) entity key; empty entries are a
    // contract violation.
    void add(const std::string& entity, Entry entry);

    // Entries for a (folded) surface form, or null when the token names no
    // entity.
    const std::vector<Entry>* find(const std::string& token) const;

    bool empty() const { return entries_.size() == 0; }
    size_t n_entities() const { return entries_.size(); }
    size_t n_entries() const;

  private:
    std::unordered_map<std::string, std::vector<Entry>> entries_;
};

// ASCII case folding used for entity matching.
std::string fold_case(const std::string& s);

// TSV store format, one entry per line: `entity<TAB>space-separated tokens`.
// Lines starting with '#' are comments; blank lines are ignored; duplicate
// entity lines merge their entries in file order. Malformed lines raise a
// parse error naming the line.
KnowledgeBase parse_kb(const std::string& text, const std::string& name = "<kb>");
KnowledgeBase load_kb(const std::string& path);

// Title-driven retrieval: scan the title left to right, gather the entries
// of every (case-folded, exactly matching) entity, sample min(k, available)
// of them without replacement under the seed, and emit the chosen entries
// joined by <SEP> in the order their entity first appears in the title.
// per_entity switches the sampling budget from k per product to k per
// matched entity. No match yields an empty sequence.
std::vector<std::string> retrieve(const std::vector<std::string>& x, const KnowledgeBase& kb, uint64_t seed,
                                  int k = 5, bool per_entity = false);

}  // namespace kobe
