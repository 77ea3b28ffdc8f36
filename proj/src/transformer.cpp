#include "kobe/transformer.hpp"

#include <cmath>
#include <limits>

#include "kobe/special_ids.hpp"

namespace kobe {

namespace {
constexpr float kNegInf = -std::numeric_limits<float>::infinity();

void attach_norm(ParamSet& ps, const std::string& base, NormParams& n, int d) {
    n.gain = &ps.add(base + ".gain", Shape::vec(d));
    n.bias = &ps.add(base + ".bias", Shape::vec(d));
}

void attach_attention(ParamSet& ps, const std::string& base, AttentionParams& a, int d) {
    a.wq = &ps.add(base + ".wq", Shape::mat(d, d));
    a.wk = &ps.add(base + ".wk", Shape::mat(d, d));
    a.wv = &ps.add(base + ".wv", Shape::mat(d, d));
    a.wo = &ps.add(base + ".wo", Shape::mat(d, d));
}

void attach_ffn(ParamSet& ps, const std::string& base, FfnParams& f, const ModelConfig& cfg) {
    f.w1 = &ps.add(base + ".w1", Shape::mat(cfg.d_model, cfg.d_ff));
    f.b1 = &ps.add(base + ".b1", Shape::vec(cfg.d_ff));
    f.w2 = &ps.add(base + ".w2", Shape::mat(cfg.d_ff, cfg.d_model));
    f.b2 = &ps.add(base + ".b2", Shape::vec(cfg.d_model));
}
}  // namespace

void ModelConfig::validate() const {
    if (d_model < 2 || d_model % 2 != 0)
        throw ConfigError("d_model must be even and >= 2, got " + std::to_string(d_model));
    if (heads < 1 || d_model % heads != 0)
        throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by heads " +
                          std::to_string(heads));
    if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
    if (encoder_layers < 0 || decoder_layers < 0) throw ConfigError("layer counts must be >= 0");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0, 1)");
    if (max_positions < 1) throw ConfigError("max_positions must be >= 1");
}

EncoderParams make_encoder_params(ParamSet& ps, const std::string& prefix, int vocab, const ModelConfig& cfg,
                                  Parameter* shared_emb) {
    if (!shared_emb && vocab < 1) throw ConfigError("encoder vocab must be >= 1");
    EncoderParams p;
    p.emb = shared_emb ? shared_emb : &ps.add(prefix + ".emb", Shape::mat(vocab, cfg.d_model));
    p.layers.resize(cfg.encoder_layers);
    for (int l = 0; l < cfg.encoder_layers; ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        attach_attention(ps, base + ".att", p.layers[l].att, cfg.d_model);
        attach_norm(ps, base + ".att_norm", p.layers[l].att_norm, cfg.d_model);
        attach_ffn(ps, base + ".ffn", p.layers[l].ffn, cfg);
        attach_norm(ps, base + ".ffn_norm", p.layers[l].ffn_norm, cfg.d_model);
    }
    return p;
}

DecoderParams make_decoder_params(ParamSet& ps, const std::string& prefix, int vocab, const ModelConfig& cfg) {
    if (vocab < 1) throw ConfigError("decoder vocab must be >= 1");
    DecoderParams p;
    p.emb = &ps.add(prefix + ".emb", Shape::mat(vocab, cfg.d_model));
    p.layers.resize(cfg.decoder_layers);
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        attach_attention(ps, base + ".self", p.layers[l].self_att, cfg.d_model);
        attach_norm(ps, base + ".self_norm", p.layers[l].self_norm, cfg.d_model);
        attach_attention(ps, base + ".ctx", p.layers[l].ctx_att, cfg.d_model);
        attach_norm(ps, base + ".ctx_norm", p.layers[l].ctx_norm, cfg.d_model);
        attach_ffn(ps, base + ".ffn", p.layers[l].ffn, cfg);
        attach_norm(ps, base + ".ffn_norm", p.layers[l].ffn_norm, cfg.d_model);
    }
    p.out_w = cfg.tied_output ? nullptr : &ps.add(prefix + ".out.w", Shape::mat(cfg.d_model, vocab));
    p.out_b = &ps.add(prefix + ".out.b", Shape::vec(vocab));
    return p;
}

Tensor sinusoidal_positions(int n, int d) {
    if (d < 2 || d % 2 != 0) throw ConfigError("position encoding needs an even dim, got " + std::to_string(d));
    if (n < 1) throw ContractError("position encoding needs length >= 1");
    Tensor pos = Tensor::zeros(Shape::mat(n, d));
    for (int i = 0; i < d / 2; ++i) {
        const double inv_freq = std::pow(10000.0, (2.0 * i) / d);
        for (int p = 0; p < n; ++p) {
            const double angle = p / inv_freq;
            pos.at(p, 2 * i) = static_cast<float>(std::sin(angle));
            pos.at(p, 2 * i + 1) = static_cast<float>(std::cos(angle));
        }
    }
    return pos;
}

std::vector<uint8_t> pad_mask_of(const std::vector<int>& tokens) {
    std::vector<uint8_t> m(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) m[i] = tokens[i] == kPadId ? 1 : 0;
    return m;
}

std::vector<float> additive_mask(int n_q, const std::vector<uint8_t>& key_pad, bool causal) {
    const int n_k = static_cast<int>(key_pad.size());
    if (causal && n_q != n_k) throw ContractError("causal mask requires query count == key count");
    std::vector<float> m(static_cast<size_t>(n_q) * n_k, 0.0f);
    for (int i = 0; i < n_q; ++i)
        for (int j = 0; j < n_k; ++j)
            if (key_pad[j] || (causal && j > i)) m[static_cast<size_t>(i) * n_k + j] = kNegInf;
    return m;
}

int apply_dropout(Tape& t, int node, const DropoutCtx& drop) {
    if (drop.rate <= 0.0f || drop.rng == nullptr) return node;
    return t.dropout(node, drop.rate, *drop.rng);
}

int multi_head_attention(Tape& t, int q_in, int k_in, int v_in, int mask_node, const AttentionParams& p,
                         const ModelConfig& cfg, AttnTrace* trace, const std::string& label) {
    const int d = cfg.d_model;
    if (t.shape(q_in).d[1] != d || t.shape(k_in).d[1] != d || t.shape(v_in).d[1] != d)
        throw ShapeError("attention inputs must have " + std::to_string(d) + " columns");
    const int n_q = t.shape(q_in).d[0];
    const int n_k = t.shape(k_in).d[0];
    if (t.shape(v_in).d[0] != n_k) throw ShapeError("key and value row counts disagree");
    if (mask_node >= 0 && t.shape(mask_node) != Shape::mat(n_q, n_k))
        throw ContractError("attention mask shape " + t.shape(mask_node).str() + " does not cover " +
                            Shape::mat(n_q, n_k).str());

    const int q = t.matmul(q_in, t.leaf(*p.wq));
    const int k = t.matmul(k_in, t.leaf(*p.wk));
    const int v = t.matmul(v_in, t.leaf(*p.wv));
    const int dk = cfg.d_k();
    const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(dk));

    std::vector<int> head_ctx;
    head_ctx.reserve(cfg.heads);
    for (int h = 0; h < cfg.heads; ++h) {
        const int qh = t.slice_cols(q, h * dk, (h + 1) * dk);
        const int kh = t.slice_cols(k, h * dk, (h + 1) * dk);
        const int vh = t.slice_cols(v, h * dk, (h + 1) * dk);
        int scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt_dk);
        if (mask_node >= 0) scores = t.add(scores, mask_node);
        const int weights = t.softmax_rows(scores);
        if (trace) {
            trace->labels.push_back(label + ".h" + std::to_string(h));
            trace->weights.push_back(t.tensor(weights));
        }
        head_ctx.push_back(t.matmul(weights, vh));
    }
    const int cat = head_ctx.size() == 1 ? head_ctx[0] : t.concat_cols(head_ctx);
    return t.matmul(cat, t.leaf(*p.wo));
}

int ffn(Tape& t, int z, const FfnParams& p) {
    const int hidden = t.relu(t.add_row(t.matmul(z, t.leaf(*p.w1)), t.leaf(*p.b1)));
    return t.add_row(t.matmul(hidden, t.leaf(*p.w2)), t.leaf(*p.b2));
}

int embed_sequence(Tape& t, const std::vector<int>& tokens, Parameter& table, const ModelConfig& cfg,
                   const DropoutCtx& drop, int add_row_node, int start_override) {
    if (tokens.empty()) throw ContractError("cannot embed an empty token sequence");
    const int n = static_cast<int>(tokens.size());
    if (n > cfg.max_positions)
        throw ContractError("sequence length " + std::to_string(n) + " exceeds max_positions " +
                            std::to_string(cfg.max_positions));
    int e = t.gather_rows(t.leaf(table), tokens);
    if (cfg.scale_embeddings) e = t.scale(e, std::sqrt(static_cast<float>(cfg.d_model)));
    if (start_override >= 0) {
        if (t.shape(start_override) != Shape::mat(1, cfg.d_model))
            throw ShapeError("start override must be [1 x d_model], got " + t.shape(start_override).str());
        e = n == 1 ? start_override : t.concat_rows({start_override, t.slice_rows(e, 1, n)});
    }
    if (add_row_node >= 0) e = t.add_row(e, add_row_node);
    const Tensor pos = sinusoidal_positions(n, cfg.d_model);
    e = t.add(e, t.input(pos.shape, pos.v));
    return apply_dropout(t, e, drop);
}

int encoder_forward(Tape& t, const std::vector<int>& tokens, const EncoderParams& p, const ModelConfig& cfg,
                    const DropoutCtx& drop, int add_row_node, AttnTrace* trace, const std::string& label) {
    cfg.validate();
    const int n = static_cast<int>(tokens.size());
    int x = embed_sequence(t, tokens, *p.emb, cfg, drop, add_row_node);

    const std::vector<uint8_t> pad = pad_mask_of(tokens);
    int mask = -1;
    for (uint8_t b : pad)
        if (b) {
            mask = t.input(Shape::mat(n, n), additive_mask(n, pad, false));
            break;
        }

    for (size_t l = 0; l < p.layers.size(); ++l) {
        const EncLayerParams& L = p.layers[l];
        const std::string lbl = label + ".l" + std::to_string(l);
        const int att = multi_head_attention(t, x, x, x, mask, L.att, cfg, trace, lbl);
        x = t.layer_norm(t.add(x, apply_dropout(t, att, drop)), t.leaf(*L.att_norm.gain), t.leaf(*L.att_norm.bias));
        const int f = ffn(t, x, L.ffn);
        x = t.layer_norm(t.add(x, apply_dropout(t, f, drop)), t.leaf(*L.ffn_norm.gain), t.leaf(*L.ffn_norm.bias));
    }
    return x;
}

int decoder_forward(Tape& t, const std::vector<int>& prefix, int context, const std::vector<uint8_t>& ctx_pad,
                    const DecoderParams& p, const ModelConfig& cfg, const DropoutCtx& drop, int start_override,
                    AttnTrace* trace, const std::string& label) {
    cfg.validate();
    if (prefix.empty()) throw ContractError("decoder prefix is empty");
    if (prefix[0] != kBosId)
        throw ContractError("decoder prefix must start with the begin-of-sequence id " + std::to_string(kBosId));
    const int n_ctx = t.shape(context).d[0];
    if (t.shape(context).rank != 2 || t.shape(context).d[1] != cfg.d_model)
        throw ShapeError("decoder context must be [n x d_model], got " + t.shape(context).str());
    if (ctx_pad.size() != static_cast<size_t>(n_ctx))
        throw ContractError("context pad mask length " + std::to_string(ctx_pad.size()) + " does not match " +
                            std::to_string(n_ctx) + " context rows");

    const int tq = static_cast<int>(prefix.size());
    int x = embed_sequence(t, prefix, *p.emb, cfg, drop, -1, start_override);

    const int self_mask = t.input(Shape::mat(tq, tq), additive_mask(tq, pad_mask_of(prefix), true));
    int ctx_mask = -1;
    for (uint8_t b : ctx_pad)
        if (b) {
            ctx_mask = t.input(Shape::mat(tq, n_ctx), additive_mask(tq, ctx_pad, false));
            break;
        }

    for (size_t l = 0; l < p.layers.size(); ++l) {
        const DecLayerParams& L = p.layers[l];
        const std::string lbl = label + ".l" + std::to_string(l);
        const int self = multi_head_attention(t, x, x, x, self_mask, L.self_att, cfg, trace, lbl + ".self");
        x = t.layer_norm(t.add(x, apply_dropout(t, self, drop)), t.leaf(*L.self_norm.gain),
                         t.leaf(*L.self_norm.bias));
        const int ctx = multi_head_attention(t, x, context, context, ctx_mask, L.ctx_att, cfg, trace, lbl + ".ctx");
        x = t.layer_norm(t.add(x, apply_dropout(t, ctx, drop)), t.leaf(*L.ctx_norm.gain), t.leaf(*L.ctx_norm.bias));
        const int f = ffn(t, x, L.ffn);
        x = t.layer_norm(t.add(x, apply_dropout(t, f, drop)), t.leaf(*L.ffn_norm.gain), t.leaf(*L.ffn_norm.bias));
    }

    int logits = cfg.tied_output ? t.matmul_nt(x, t.leaf(*p.emb)) : t.matmul(x, t.leaf(*p.out_w));
    return t.add_row(logits, t.leaf(*p.out_b));
}

}  // namespace kobe
