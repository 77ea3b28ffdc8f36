#pragma once

#include <string>
#include <vector>

#include "kobe/params.hpp"
#include "kobe/tensor.hpp"

// Transformer building blocks: token embeddings with sinusoidal positions,
// multi-head scaled dot-product attention, a position-wise feed-forward
// network, and post-norm encoder/decoder stacks (norm applied after the
// residual add, the recipe of the original architecture).

namespace kobe {

struct ModelConfig {
    int d_model = 64;
    int d_ff = 256;  // conventionally 4 * d_model
    int heads = 4;
    int encoder_layers = 2;
    int decoder_layers = 2;
    float dropout = 0.1f;
    int max_positions = 512;
    int src_vocab = 0;
    int tgt_vocab = 0;
    bool scale_embeddings = true;  // multiply token embeddings by sqrt(d_model)
    bool tied_output = false;      // reuse the target embedding as the output projection

    int d_k() const { return d_model / heads; }
    void validate() const;
};

// Attention weight matrices captured during a forward pass, for tests and
// inspection. Each entry is one head's [queries x keys] weight matrix.
struct AttnTrace {
    std::vector<std::string> labels;
    std::vector<Tensor> weights;
};

// Parameter handles for one attention block / norm / FFN. Pointers refer into
// a ParamSet and stay valid for its lifetime.
struct AttentionParams {
    Parameter *wq, *wk, *wv, *wo;
};
struct NormParams {
    Parameter *gain, *bias;
};
struct FfnParams {
    Parameter *w1, *b1, *w2, *b2;
};
struct EncLayerParams {
    AttentionParams att;
    NormParams att_norm;
    FfnParams ffn;
    NormParams ffn_norm;
};
struct DecLayerParams {
    AttentionParams self_att;
    NormParams self_norm;
    AttentionParams ctx_att;
    NormParams ctx_norm;
    FfnParams ffn;
    NormParams ffn_norm;
};
struct EncoderParams {
    Parameter* emb;
    std::vector<EncLayerParams> layers;
};
struct DecoderParams {
    Parameter* emb;
    std::vector<DecLayerParams> layers;
    Parameter* out_w;  // null when the output projection is tied
    Parameter* out_b;
};

// shared_emb, when non-null, reuses an existing embedding table instead of
// creating prefix+".emb" (vocab is then ignored).
EncoderParams make_encoder_params(ParamSet& ps, const std::string& prefix, int vocab, const ModelConfig& cfg,
                                  Parameter* shared_emb = nullptr);
DecoderParams make_decoder_params(ParamSet& ps, const std::string& prefix, int vocab, const ModelConfig& cfg);

// Encoder output detached from the tape, for callers that only need values.
struct EncodedSequence {
    Tensor states;                  // [len x d_model]
    std::vector<uint8_t> pad_mask;  // 1 = padding position
};

// Position encoding matrix: entry (pos, 2i) = sin(pos / 10000^(2i/d)),
// entry (pos, 2i+1) = cos of the same angle.
Tensor sinusoidal_positions(int n, int d);

// 1 where the token is the reserved padding id 0.
std::vector<uint8_t> pad_mask_of(const std::vector<int>& tokens);

// Additive attention mask [n_q x n_k]: 0 everywhere except -inf at padded key
// columns and, when causal, at key positions after the query position.
std::vector<float> additive_mask(int n_q, const std::vector<uint8_t>& key_pad, bool causal);

// Dropout plumbing for training; inference passes keep the default (rate 0).
struct DropoutCtx {
    float rate = 0.0f;
    Rng* rng = nullptr;
};

int apply_dropout(Tape& t, int node, const DropoutCtx& drop);

// softmax(Q K^T / sqrt(d_k) + mask) V per head, heads concatenated and
// output-projected. mask_node < 0 means no mask.
int multi_head_attention(Tape& t, int q_in, int k_in, int v_in, int mask_node, const AttentionParams& p,
                         const ModelConfig& cfg, AttnTrace* trace = nullptr, const std::string& label = "");

// Position-wise W2 relu(W1 z + b1) + b2.
int ffn(Tape& t, int z, const FfnParams& p);

// Shared embedding pipeline: gather, optional sqrt(d) scaling, optional extra
// row added to every position, position encoding, dropout.
int embed_sequence(Tape& t, const std::vector<int>& tokens, Parameter& table, const ModelConfig& cfg,
                   const DropoutCtx& drop, int add_row_node = -1, int start_override = -1);

// Full encoder stack over the token sequence; pads are masked out of
// attention. Returns the node of the final [n x d_model] states.
int encoder_forward(Tape& t, const std::vector<int>& tokens, const EncoderParams& p, const ModelConfig& cfg,
                    const DropoutCtx& drop = {}, int add_row_node = -1, AttnTrace* trace = nullptr,
                    const std::string& label = "enc");

// Decoder over a begin-of-sequence-led prefix: causal self-attention, context
// attention over `context` (a [n x d_model] node), FFN; returns logits
// [t x tgt_vocab]. start_override, when >= 0, is a [1 x d_model] node used in
// place of the begin-of-sequence embedding.
int decoder_forward(Tape& t, const std::vector<int>& prefix, int context, const std::vector<uint8_t>& ctx_pad,
                    const DecoderParams& p, const ModelConfig& cfg, const DropoutCtx& drop = {},
                    int start_override = -1, AttnTrace* trace = nullptr, const std::string& label = "dec");

}  // namespace kobe
