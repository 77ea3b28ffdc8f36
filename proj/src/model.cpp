#include "kobe/model.hpp"

#include <cmath>

namespace kobe {

const char* to_string(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::None: return "none";
        case FusionStrategy::Dedicated: return "dedicated";
        case FusionStrategy::SourceToken: return "source-token";
        case FusionStrategy::TargetStart: return "target-start";
        case FusionStrategy::Add: return "add";
    }
    return "?";
}

const char* to_string(AttrUse u) {
    switch (u) {
        case AttrUse::Aspect: return "aspect";
        case AttrUse::User: return "user";
        case AttrUse::Both: return "both";
    }
    return "?";
}

FusionStrategy fusion_strategy_from_string(const std::string& s) {
    if (s == "none") return FusionStrategy::None;
    if (s == "dedicated") return FusionStrategy::Dedicated;
    if (s == "source-token") return FusionStrategy::SourceToken;
    if (s == "target-start") return FusionStrategy::TargetStart;
    if (s == "add") return FusionStrategy::Add;
    throw ConfigError("unknown fusion strategy '" + s + "'");
}

AttrUse attr_use_from_string(const std::string& s) {
    if (s == "aspect") return AttrUse::Aspect;
    if (s == "user") return AttrUse::User;
    if (s == "both") return AttrUse::Both;
    throw ConfigError("unknown attribute selection '" + s + "'");
}

void ModelSpec::validate() const {
    cfg.validate();
    if (n_aspects < 0 || n_categories < 0) throw ConfigError("attribute counts must be nonnegative");
    if (fusion.strategy == FusionStrategy::Dedicated) {
        if (fusion.use != AttrUse::Aspect)
            throw ConfigError("the dedicated strategy supports the aspect attribute only");
        if (n_aspects < 1) throw ConfigError("dedicated strategy needs at least one aspect");
    }
    if (fusion.fuses()) {
        if (fusion.use_aspect() && n_aspects < 1)
            throw ConfigError("fusion strategy uses aspects but n_aspects is 0");
        if (fusion.use_user() && n_categories < 1)
            throw ConfigError("fusion strategy uses user categories but n_categories is 0");
    }
    if (fusion.strategy == FusionStrategy::SourceToken &&
        cfg.src_vocab < kNumReservedIds + n_aspects + n_categories)
        throw ConfigError("source vocabulary too small to hold the reserved attribute tokens");
}

KobeModel build_model(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    KobeModel m;
    m.spec = spec;
    const int d = spec.cfg.d_model;
    ParamSet& ps = m.params;

    m.title_enc = make_encoder_params(ps, "enc", spec.cfg.src_vocab, spec.cfg);
    if (spec.use_knowledge) m.know_enc = make_encoder_params(ps, "know", 0, spec.cfg, m.title_enc.emb);
    m.dec = make_decoder_params(ps, "dec", spec.cfg.tgt_vocab, spec.cfg);

    if (spec.fusion.needs_tables()) {
        if (spec.fusion.use_aspect()) m.attr_aspect = &ps.add("attr.aspect", Shape::mat(spec.n_aspects, d));
        if (spec.fusion.use_user()) m.attr_user = &ps.add("attr.user", Shape::mat(spec.n_categories, d));
    }
    if (spec.use_knowledge) {
        m.bi_w = &ps.add("bi.w", Shape::mat(1, 3 * d));
        m.comb_w = &ps.add("comb.w", Shape::mat(4 * d, d));
        m.comb_b = &ps.add("comb.b", Shape::vec(d));
    }
    init_parameters(ps, seed);
    return m;
}

// ---------------------------------------------------------------------------
// Attribute fusion

namespace {
void check_attr_ids(const FusionSpec& fusion, const AttributePair& a, int n_aspects, int n_categories) {
    if (fusion.use_aspect() && (a.a1 < 0 || a.a1 >= n_aspects))
        throw ContractError("aspect id " + std::to_string(a.a1) + " outside schema of " +
                            std::to_string(n_aspects));
    if (fusion.use_user() && (a.a2 < 0 || a.a2 >= n_categories))
        throw ContractError("user category id " + std::to_string(a.a2) + " outside schema of " +
                            std::to_string(n_categories));
}
}  // namespace

int attribute_embedding_row(Tape& t, const KobeModel& m, const AttributePair& a) {
    const FusionSpec& f = m.spec.fusion;
    if (!f.needs_tables()) throw ContractError("fusion strategy keeps no attribute tables");
    check_attr_ids(f, a, m.spec.n_aspects, m.spec.n_categories);
    int row = -1;
    if (f.use_aspect()) row = t.gather_rows(t.leaf(*m.attr_aspect), {a.a1});
    if (f.use_user()) {
        const int urow = t.gather_rows(t.leaf(*m.attr_user), {a.a2});
        row = row < 0 ? urow : t.scale(t.add(row, urow), 0.5f);
    }
    return row;
}

int fuse_attributes_add(Tape& t, int title_embeddings, const KobeModel& m, const AttributePair& a) {
    return t.add_row(title_embeddings, attribute_embedding_row(t, m, a));
}

int fuse_attributes_target_start(Tape& t, const KobeModel& m, const AttributePair& a) {
    return attribute_embedding_row(t, m, a);
}

std::vector<std::string> fuse_attributes_source_tokens(const std::vector<std::string>& x, const AttributePair& a,
                                                       const FusionSpec& fusion, int n_aspects,
                                                       int n_categories) {
    if (!x.empty()) {
        for (int i = 0; i < n_aspects; ++i)
            if (x[0] == aspect_token(i)) throw ContractError("title already carries attribute token " + x[0]);
        for (int i = 0; i < n_categories; ++i)
            if (x[0] == user_token(i)) throw ContractError("title already carries attribute token " + x[0]);
    }
    check_attr_ids(fusion, a, n_aspects, n_categories);
    std::vector<std::string> out;
    out.reserve(x.size() + 2);
    if (fusion.use_aspect()) out.push_back(aspect_token(a.a1));
    if (fusion.use_user()) out.push_back(user_token(a.a2));
    out.insert(out.end(), x.begin(), x.end());
    return out;
}

std::vector<int> fuse_attribute_source_ids(const std::vector<int>& x, const AttributePair& a,
                                           const ModelSpec& spec) {
    const int base = kNumReservedIds;
    const int end = base + spec.n_aspects + spec.n_categories;
    if (!x.empty() && x[0] >= base && x[0] < end)
        throw ContractError("title already carries attribute token id " + std::to_string(x[0]));
    check_attr_ids(spec.fusion, a, spec.n_aspects, spec.n_categories);
    std::vector<int> out;
    out.reserve(x.size() + 2);
    if (spec.fusion.use_aspect()) out.push_back(base + a.a1);
    if (spec.fusion.use_user()) out.push_back(base + spec.n_aspects + a.a2);
    out.insert(out.end(), x.begin(), x.end());
    return out;
}

std::map<int, std::vector<Instance>> split_by_aspect(const std::vector<Instance>& data) {
    std::map<int, std::vector<Instance>> out;
    for (const auto& inst : data) out[inst.a1].push_back(inst);
    return out;
}

// ---------------------------------------------------------------------------
// Knowledge incorporation

int bi_attention(Tape& t, int h, int u, int w_node, BiAttnTrace* trace) {
    const Shape sh = t.shape(h), su = t.shape(u);
    if (sh.rank != 2 || su.rank != 2 || sh.d[1] != su.d[1])
        throw ShapeError("bi_attention expects [n x d] and [m x d], got " + sh.str() + " and " + su.str());
    const int n = sh.d[0], m = su.d[0], d = sh.d[1];
    if (m < 1) throw ContractError("bi_attention requires at least one knowledge row");

    Shape sw = t.shape(w_node);
    int w = w_node;
    if (sw.rank == 1 && sw.d[0] == 3 * d) w = t.reshape(w_node, Shape::mat(1, 3 * d));
    else if (!(sw.rank == 2 && sw.d[0] == 1 && sw.d[1] == 3 * d))
        throw ShapeError("bi_attention weights must be [3d], got " + sw.str());
    const int w1 = t.slice_cols(w, 0, d);
    const int w2 = t.slice_cols(w, d, 2 * d);
    const int w3 = t.slice_cols(w, 2 * d, 3 * d);

    // S_ij = w1*h_i + w2*u_j + w3*(h_i o u_j), assembled as a rank-1 update
    // of the weighted product term.
    const int S = t.add_row(t.add_col(t.matmul_nt(t.mul_row(h, w3), u), t.matmul_nt(h, w1)),
                            t.reshape(t.matmul_nt(u, w2), Shape::mat(1, m)));
    const int A = t.softmax(S, 1);
    const int u_att = t.matmul(A, u);  // per-title-row knowledge summary

    const int b = t.softmax(t.max_rows(S), 0);
    const int h_att = t.tile_rows(t.matmul(t.reshape(b, Shape::mat(1, n)), h), n);

    if (trace) {
        trace->S = t.tensor(S);
        trace->A = t.tensor(A);
        trace->b = t.tensor(b);
    }
    return t.concat_cols({h, u_att, t.mul(h, u_att), t.mul(h, h_att)});
}

int combine_projection(Tape& t, const KobeModel& m, int raw_concat) {
    if (!m.comb_w) throw ContractError("model was built without knowledge support");
    return t.add_row(t.matmul(raw_concat, t.leaf(*m.comb_w)), t.leaf(*m.comb_b));
}

// ---------------------------------------------------------------------------
// End-to-end forward

int kobe_forward(Tape& t, const KobeModel& m, const std::vector<int>& x, const std::vector<int>& w,
                 const AttributePair& a, const std::vector<int>& y, const DropoutCtx& drop, KobeTrace* trace) {
    if (x.empty()) throw ContractError("kobe_forward: empty title");
    const ModelConfig& cfg = m.spec.cfg;

    std::vector<int> tokens = x;
    int attr_row = -1, start_override = -1;
    switch (m.spec.fusion.strategy) {
        case FusionStrategy::SourceToken: tokens = fuse_attribute_source_ids(x, a, m.spec); break;
        case FusionStrategy::Add: attr_row = attribute_embedding_row(t, m, a); break;
        case FusionStrategy::TargetStart: {
            // Start from the usual scaled begin-of-sequence embedding plus the
            // attribute mean: zero tables reproduce the baseline bit for bit.
            int bos = t.gather_rows(t.leaf(*m.dec.emb), {kBosId});
            if (cfg.scale_embeddings) bos = t.scale(bos, std::sqrt(static_cast<float>(cfg.d_model)));
            start_override = t.add(bos, fuse_attributes_target_start(t, m, a));
            break;
        }
        default: break;
    }

    AttnTrace* at = trace ? &trace->attn : nullptr;
    const int h = encoder_forward(t, tokens, m.title_enc, cfg, drop, attr_row, at, "enc");
    if (trace) trace->title_states = h;

    int ctx = h;  // baseline context; also the empty-knowledge fallback
    const std::vector<uint8_t> ctx_pad = pad_mask_of(tokens);
    if (m.spec.use_knowledge && !w.empty()) {
        const int u = encoder_forward(t, w, m.know_enc, cfg, drop, -1, at, "know");
        const int raw = bi_attention(t, h, u, t.leaf(*m.bi_w), trace ? &trace->bi : nullptr);
        ctx = combine_projection(t, m, raw);
        if (trace) {
            trace->know_states = u;
            trace->raw_concat = raw;
            trace->used_knowledge = true;
        }
    }
    if (trace) trace->context = ctx;

    std::vector<int> prefix;
    prefix.reserve(y.size() + 1);
    prefix.push_back(kBosId);
    prefix.insert(prefix.end(), y.begin(), y.end());
    return decoder_forward(t, prefix, ctx, ctx_pad, m.dec, cfg, drop, start_override, at, "dec");
}

std::vector<int> teacher_targets(const std::vector<int>& y) {
    std::vector<int> targets = y;
    targets.push_back(kEosId);
    return targets;
}

int nll_loss(Tape& t, int logits, const std::vector<int>& targets) {
    const Shape s = t.shape(logits);
    if (s.rank != 2 || s.d[0] != static_cast<int>(targets.size()))
        throw ContractError("nll_loss: " + std::to_string(s.rank == 2 ? s.d[0] : -1) + " logit rows vs " +
                            std::to_string(targets.size()) + " targets");
    return t.cross_entropy_mean(logits, targets, kPadId);
}

}  // namespace kobe
