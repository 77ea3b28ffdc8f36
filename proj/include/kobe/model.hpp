#pragma once

#include <map>
#include <string>
#include <vector>

#include "kobe/data.hpp"
#include "kobe/transformer.hpp"

// The full generator: a title encoder and a knowledge encoder (sharing one
// source embedding table), attribute fusion in one of four strategies, a
// bi-directional attention layer that combines title and knowledge states,
// a learned projection back to model width, and a teacher-forced decoder.

namespace kobe {

// One (aspect, user-category) conditioning pair. -1 marks "not annotated";
// fusion requires annotated ids within the schema bounds.
struct AttributePair {
    int a1 = -1;  // aspect id
    int a2 = -1;  // user category id (0 is the reserved unknown)
};

// How attributes enter the network. None is the plain encoder-decoder
// baseline. Dedicated trains a separate baseline per aspect subset (a data
// split, not an architecture change — see split_by_aspect). SourceToken
// prepends reserved tokens to the title, TargetStart shifts the decoder's
// start embedding, Add shifts every title embedding.
enum class FusionStrategy { None, Dedicated, SourceToken, TargetStart, Add };

enum class AttrUse { Aspect, User, Both };

struct FusionSpec {
    FusionStrategy strategy = FusionStrategy::None;
    AttrUse use = AttrUse::Both;

    bool use_aspect() const { return use != AttrUse::User; }
    bool use_user() const { return use != AttrUse::Aspect; }
    // Strategies that read the attribute pair at forward time.
    bool fuses() const {
        return strategy == FusionStrategy::SourceToken || strategy == FusionStrategy::TargetStart ||
               strategy == FusionStrategy::Add;
    }
    // Strategies whose fusion happens through learned attribute tables.
    bool needs_tables() const {
        return strategy == FusionStrategy::TargetStart || strategy == FusionStrategy::Add;
    }
};

const char* to_string(FusionStrategy s);
const char* to_string(AttrUse u);
FusionStrategy fusion_strategy_from_string(const std::string& s);
AttrUse attr_use_from_string(const std::string& s);

struct ModelSpec {
    ModelConfig cfg;
    FusionSpec fusion;
    bool use_knowledge = false;
    int n_aspects = 0;
    int n_categories = 0;

    void validate() const;
};

struct KobeModel {
    ModelSpec spec;
    ParamSet params;
    EncoderParams title_enc;
    EncoderParams know_enc;  // layers of its own, embedding shared with title_enc
    DecoderParams dec;
    Parameter* attr_aspect = nullptr;  // [n_aspects x d], only for table-based fusion
    Parameter* attr_user = nullptr;    // [n_categories x d]
    Parameter* bi_w = nullptr;         // [1 x 3d], similarity weights of bi_attention
    Parameter* comb_w = nullptr;       // [4d x d]
    Parameter* comb_b = nullptr;       // [d]
};

// Creates every parameter the spec calls for — and none it does not — and
// initializes them deterministically from the seed.
KobeModel build_model(const ModelSpec& spec, uint64_t seed);

// ---------------------------------------------------------------------------
// Attribute fusion

// [1 x d] mean of the attribute embeddings the fusion spec uses. Out-of-range
// or unannotated ids are contract errors.
int attribute_embedding_row(Tape& t, const KobeModel& m, const AttributePair& a);

// Title embeddings with the attribute mean added to every row.
int fuse_attributes_add(Tape& t, int title_embeddings, const KobeModel& m, const AttributePair& a);

// ["<A-a1+1>", "<U-a2+1>"] ++ x (aspect first; omitted uses omitted). Applying
// twice is rejected: a title already starting with an attribute token is a
// contract error.
std::vector<std::string> fuse_attributes_source_tokens(const std::vector<std::string>& x, const AttributePair& a,
                                                       const FusionSpec& fusion, int n_aspects, int n_categories);

// Same fusion on encoded ids. Relies on the vocabulary layout where the
// attribute tokens sit right after the five specials, aspects first — the
// layout attribute_source_tokens() produces when passed as reserved tokens.
std::vector<int> fuse_attribute_source_ids(const std::vector<int>& x, const AttributePair& a,
                                           const ModelSpec& spec);

// [1 x d] start embedding the decoder consumes: the attribute mean.
// kobe_forward adds it to the scaled begin-of-sequence embedding so that
// all-zero attribute tables reproduce the baseline exactly.
int fuse_attributes_target_start(Tape& t, const KobeModel& m, const AttributePair& a);

// Dedicated-model helper: one training subset per aspect id.
std::map<int, std::vector<Instance>> split_by_aspect(const std::vector<Instance>& data);

// ---------------------------------------------------------------------------
// Knowledge incorporation

// Intermediates captured for tests and inspection.
struct BiAttnTrace {
    Tensor S;  // [n x m] similarity scores
    Tensor A;  // [n x m] title-to-knowledge weights (rows sum to 1)
    Tensor b;  // [n] knowledge-to-title weights (sums to 1)
};

// Title states h [n x d] against knowledge states u [m x d] under similarity
// S_ij = w*[h_i; u_j; h_i o u_j]: returns [h; u~; h o u~; h o h~] as [n x 4d],
// where u~ attends over knowledge per title row and h~ is the b-weighted
// title summary tiled over rows. w_node holds the [1 x 3d] (or flat [3d])
// similarity weights.
int bi_attention(Tape& t, int h, int u, int w_node, BiAttnTrace* trace = nullptr);

// Learned affine [n x 4d] -> [n x d] bridging the concatenation back to the
// decoder's width.
int combine_projection(Tape& t, const KobeModel& m, int raw_concat);

// ---------------------------------------------------------------------------
// End-to-end forward

struct KobeTrace {
    AttnTrace attn;  // encoder / knowledge / decoder attention weights
    BiAttnTrace bi;
    int title_states = -1;
    int know_states = -1;
    int raw_concat = -1;
    int context = -1;
    bool used_knowledge = false;
};

// Teacher-forced pass: title ids x (+ fusion), knowledge ids w, target ids y
// (no begin/end markers; the decoder prefix and the loss targets are derived
// here and in teacher_targets). Returns logits [|y|+1 x tgt_vocab]. Empty
// knowledge falls back to attending the title states alone.
int kobe_forward(Tape& t, const KobeModel& m, const std::vector<int>& x, const std::vector<int>& w,
                 const AttributePair& a, const std::vector<int>& y, const DropoutCtx& drop = {},
                 KobeTrace* trace = nullptr);

// Loss targets matching kobe_forward's logits rows: y then <EOS>.
std::vector<int> teacher_targets(const std::vector<int>& y);

// Mean negative log-likelihood over non-pad target positions.
int nll_loss(Tape& t, int logits, const std::vector<int>& targets);

}  // namespace kobe
