#pragma once
// Search over the decoder's next-token distribution: greedy argmax and beam
// search over summed log-probabilities. Both share one scoring primitive and
// one emission rule: <PAD> and <BOS> are never candidates, everything else —
// including <UNK> and <SEP> — competes on its log-probability, and <EOS>
// terminates a hypothesis without appearing in the output.

#include <vector>

#include "kobe/model.hpp"

namespace kobe {

// Log-probabilities over the target vocabulary for the token following
// `prefix`, conditioned on the instance's title, knowledge, and attributes.
// Resets and reuses the tape; computed in double from the final logits row.
std::vector<double> next_token_log_probs(Tape& t, const KobeModel& m, const EncodedInstance& inst,
                                         const std::vector<int>& prefix);

// Repeated argmax (ties broken toward the lowest token id) until <EOS> or
// max_len emitted tokens. The result never contains <EOS>.
std::vector<int> greedy_decode(const KobeModel& m, const EncodedInstance& inst, int max_len);

struct BeamConfig {
    int beam = 10;
    int max_len = 150;
    // Compare hypotheses by score / length instead of raw summed
    // log-probability. Raw sums favor short outputs; normalization is the
    // default for real generation, and off it makes beam = 1 match greedy.
    bool length_norm = true;
};

struct BeamResult {
    std::vector<int> tokens;     // without <EOS>
    double score = 0.0;          // summed log-probability, <EOS> included when finished
    bool finished = false;       // hit <EOS> rather than the length limit
};

// Beam search. Each step ranks every extension of every live hypothesis by
// summed log-probability (ties: lexicographically smaller token sequence) and
// keeps the top `beam`; extensions ending in <EOS> retire to the finished
// pool. At the end, finished and still-open hypotheses compete in one pool —
// by normalized score when length_norm is set, raw sum otherwise, with ties
// going to the shorter and then lexicographically smaller sequence.
//
// Because a hypothesis only finishes when its <EOS> extension ranks inside
// the top `beam`, a beam of 1 with length_norm off reproduces greedy_decode
// token for token.
BeamResult beam_search_result(const KobeModel& m, const EncodedInstance& inst, const BeamConfig& cfg = {});

// Just the tokens of beam_search_result.
std::vector<int> beam_search(const KobeModel& m, const EncodedInstance& inst, const BeamConfig& cfg = {});

}  // namespace kobe
