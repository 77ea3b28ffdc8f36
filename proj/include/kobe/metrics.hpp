#pragma once
// Corpus evaluation: BLEU-4, distinct n-gram counts, and attribute-capture
// accuracy (does a tagger recover the conditioning attribute from the
// generated text?). All metrics are word-level over the given tokens.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "kobe/annotate.hpp"

namespace kobe {

using TokenCorpus = std::vector<std::vector<std::string>>;

// Corpus-level BLEU-4 in [0, 100]: uniform weights over 1..4-grams, clipped
// modified precision pooled over the corpus, brevity penalty, one reference
// per candidate. Unsmoothed, any zero pooled precision zeroes the score;
// with `smoothing` the 2..4-gram counts get add-one smoothing (unigram
// precision stays raw, so disjoint corpora still score 0).
double bleu(const TokenCorpus& candidates, const TokenCorpus& references, bool smoothing = false);

// Number of distinct token n-grams pooled over all candidates.
std::uint64_t distinct_n(const TokenCorpus& candidates, int n);

// Accuracy of recovering attributes from generated text, one indicator per
// instance: the aspect tagger and the category classifier each label the
// candidate, and the label must match the same procedure's output on the
// reference (or the instance's stored gold ids when `against_stored_labels`
// is set — the right comparison when gold annotations exist by construction).
struct CaptureResult {
    double aspect_acc = 0.0;
    double user_acc = 0.0;
    std::vector<int> aspect_pred, aspect_ref;  // per-instance labels, candidate vs reference side
    std::vector<int> user_pred, user_ref;
};

CaptureResult attribute_capture(const TokenCorpus& generated, const std::vector<Instance>& gold,
                                const AspectLexicons& lex, const WordEmbeddings& emb,
                                const ClassifierM& clf, bool against_stored_labels = false);

// ---------------------------------------------------------------------------
// Reports

struct InstanceRecord {
    std::string candidate;
    std::string reference;
    int aspect_pred = -1, aspect_ref = -1;  // -1 until capture is merged in
    int user_pred = -1, user_ref = -1;
};

struct EvalReport {
    double bleu = 0.0;
    bool smoothed = false;
    std::map<int, std::uint64_t> distinct;  // n -> count, n in {3, 4, 5}
    double aspect_capture = -1.0;           // -1 marks "not computed"
    double user_capture = -1.0;
    std::vector<InstanceRecord> instances;
};

// BLEU + distinct-{3,4,5} + per-instance texts; capture fields left unset.
EvalReport evaluate_corpus(const TokenCorpus& candidates, const TokenCorpus& references,
                           bool smoothing = false);

// Copies capture accuracies and per-instance labels into the report.
void merge_capture(EvalReport& report, const CaptureResult& capture);

nlohmann::ordered_json report_json(const EvalReport& report);

// Fixed-order human-readable table, one metric per line.
std::string report_table(const EvalReport& report);

}  // namespace kobe
