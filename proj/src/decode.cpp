#include "kobe/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kobe {

namespace {

bool emittable(int id) { return id != kPadId && id != kBosId; }

// The decoder must be able to stop; without <EOS> in the vocabulary every
// search would run to max_len and the scores would not be comparable.
void require_end_marker(const KobeModel& m) {
    if (m.spec.cfg.tgt_vocab <= kEosId)
        throw ContractError("decoding needs the end-of-sequence id " + std::to_string(kEosId) +
                            " inside the target vocabulary (size " +
                            std::to_string(m.spec.cfg.tgt_vocab) + ")");
}

}  // namespace

std::vector<double> next_token_log_probs(Tape& t, const KobeModel& m, const EncodedInstance& inst,
                                         const std::vector<int>& prefix) {
    t.reset();
    const int logits = kobe_forward(t, m, inst.x, inst.w, {inst.a1, inst.a2}, prefix);
    const Shape s = t.shape(logits);
    const int vocab = s.d[1];
    const float* row = t.val(logits) + static_cast<size_t>(s.d[0] - 1) * vocab;

    // log-softmax in double: the search sums many of these, and float
    // round-off in the normalizer would leak into every hypothesis score.
    double mx = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < vocab; ++v) mx = std::max(mx, static_cast<double>(row[v]));
    double sum = 0.0;
    for (int v = 0; v < vocab; ++v) sum += std::exp(static_cast<double>(row[v]) - mx);
    const double lse = mx + std::log(sum);

    std::vector<double> lp(vocab);
    for (int v = 0; v < vocab; ++v) lp[v] = static_cast<double>(row[v]) - lse;
    return lp;
}

std::vector<int> greedy_decode(const KobeModel& m, const EncodedInstance& inst, int max_len) {
    if (max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1, got " + std::to_string(max_len));
    require_end_marker(m);

    std::vector<int> y;
    Tape t;
    for (int step = 0; step < max_len; ++step) {
        const std::vector<double> lp = next_token_log_probs(t, m, inst, y);
        int best = -1;
        for (int v = 0; v < static_cast<int>(lp.size()); ++v)
            if (emittable(v) && (best < 0 || lp[v] > lp[best])) best = v;
        if (best == kEosId) break;
        y.push_back(best);
    }
    return y;
}

namespace {

struct Hypothesis {
    std::vector<int> tokens;
    double score = 0.0;
};

// A proposed one-token extension of active[hyp]; materialized only if kept.
struct Candidate {
    int hyp;
    int token;
    double score;
};

// Lexicographic order of the extended sequences. Within one step every
// active hypothesis has the same length, so comparing the prefixes
// position-by-position and then the new token is a full-sequence compare.
bool extension_less(const std::vector<Hypothesis>& active, const Candidate& a, const Candidate& b) {
    const std::vector<int>& pa = active[a.hyp].tokens;
    const std::vector<int>& pb = active[b.hyp].tokens;
    for (size_t i = 0; i < pa.size(); ++i)
        if (pa[i] != pb[i]) return pa[i] < pb[i];
    return a.token < b.token;
}

double ranking_score(const BeamResult& r, bool length_norm) {
    if (!length_norm) return r.score;
    // A finished empty hypothesis (<EOS> first) has length 0; dividing by
    // at least 1 keeps its score finite and comparable.
    return r.score / static_cast<double>(std::max<size_t>(1, r.tokens.size()));
}

// Final-pool order: better score first, then shorter, then lexicographically
// smaller tokens.
bool result_better(const BeamResult& a, const BeamResult& b, bool length_norm) {
    const double sa = ranking_score(a, length_norm);
    const double sb = ranking_score(b, length_norm);
    if (sa != sb) return sa > sb;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return a.tokens < b.tokens;
}

}  // namespace

BeamResult beam_search_result(const KobeModel& m, const EncodedInstance& inst, const BeamConfig& cfg) {
    if (cfg.beam < 1) throw ConfigError("beam_search: beam must be >= 1, got " + std::to_string(cfg.beam));
    if (cfg.max_len < 1)
        throw ConfigError("beam_search: max_len must be >= 1, got " + std::to_string(cfg.max_len));
    require_end_marker(m);

    std::vector<Hypothesis> active{Hypothesis{}};
    std::vector<BeamResult> finished;
    Tape t;

    for (int step = 0; step < cfg.max_len && !active.empty(); ++step) {
        std::vector<Candidate> cands;
        cands.reserve(active.size() * static_cast<size_t>(m.spec.cfg.tgt_vocab));
        for (int h = 0; h < static_cast<int>(active.size()); ++h) {
            const std::vector<double> lp = next_token_log_probs(t, m, inst, active[h].tokens);
            for (int v = 0; v < static_cast<int>(lp.size()); ++v)
                if (emittable(v)) cands.push_back({h, v, active[h].score + lp[v]});
        }

        const size_t keep = std::min<size_t>(cfg.beam, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                          [&](const Candidate& a, const Candidate& b) {
                              if (a.score != b.score) return a.score > b.score;
                              return extension_less(active, a, b);
                          });

        std::vector<Hypothesis> next;
        next.reserve(keep);
        for (size_t i = 0; i < keep; ++i) {
            const Candidate& c = cands[i];
            if (c.token == kEosId) {
                finished.push_back({active[c.hyp].tokens, c.score, true});
            } else {
                Hypothesis h;
                h.tokens = active[c.hyp].tokens;
                h.tokens.push_back(c.token);
                h.score = c.score;
                next.push_back(std::move(h));
            }
        }
        active = std::move(next);
    }

    // Hypotheses still open at the length limit compete with the finished
    // ones as they stand — no <EOS> term is added to their scores.
    std::vector<BeamResult> pool = std::move(finished);
    for (Hypothesis& h : active) pool.push_back({std::move(h.tokens), h.score, false});
    if (pool.empty()) throw ContractError("beam_search produced no hypotheses");

    size_t best = 0;
    for (size_t i = 1; i < pool.size(); ++i)
        if (result_better(pool[i], pool[best], cfg.length_norm)) best = i;
    return pool[best];
}

std::vector<int> beam_search(const KobeModel& m, const EncodedInstance& inst, const BeamConfig& cfg) {
    return beam_search_result(m, inst, cfg).tokens;
}

}  // namespace kobe
