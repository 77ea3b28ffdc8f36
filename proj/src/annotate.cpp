#include "kobe/annotate.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "kobe/train.hpp"

namespace kobe {

// ---------------------------------------------------------------------------
// Word embeddings

const float* WordEmbeddings::row(int i) const {
    if (i < 0 || i >= n_words()) throw ContractError("embedding row " + std::to_string(i) + " out of range");
    return mat.data() + static_cast<size_t>(i) * dim;
}

const float* WordEmbeddings::find(const std::string& word) const {
    const auto it = index.find(word);
    return it == index.end() ? nullptr : row(it->second);
}

float cosine(const float* a, const float* b, int dim) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (int i = 0; i < dim; ++i) {
        ab += static_cast<double>(a[i]) * b[i];
        aa += static_cast<double>(a[i]) * a[i];
        bb += static_cast<double>(b[i]) * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0f;
    return static_cast<float>(ab / (std::sqrt(aa) * std::sqrt(bb)));
}

WordEmbeddings sgns_train(const std::vector<std::vector<std::string>>& sentences, const SgnsConfig& cfg,
                          uint64_t seed) {
    if (cfg.dim < 2) throw ConfigError("sgns_train: dim must be >= 2");
    if (cfg.window < 1) throw ConfigError("sgns_train: window must be >= 1");
    if (cfg.negatives < 0) throw ConfigError("sgns_train: negative negatives");
    if (cfg.epochs < 1) throw ConfigError("sgns_train: epochs must be >= 1");
    if (cfg.lr <= 0.0f) throw ConfigError("sgns_train: lr must be positive");
    if (cfg.min_count < 1) throw ConfigError("sgns_train: min_count must be >= 1");

    std::unordered_map<std::string, long long> counts;
    for (const auto& sent : sentences)
        for (const auto& tok : sent) ++counts[tok];

    std::vector<std::pair<std::string, long long>> kept(counts.begin(), counts.end());
    kept.erase(std::remove_if(kept.begin(), kept.end(),
                              [&](const auto& e) { return e.second < cfg.min_count; }),
               kept.end());
    if (kept.empty()) throw ContractError("sgns_train: corpus is empty");
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    WordEmbeddings emb;
    emb.dim = cfg.dim;
    for (const auto& [word, count] : kept) {
        emb.index.emplace(word, emb.n_words());
        emb.words.push_back(word);
    }

    const int V = emb.n_words();
    const int d = cfg.dim;
    Rng rng(seed);
    emb.mat.resize(static_cast<size_t>(V) * d);
    for (auto& x : emb.mat) x = (rng.uniform(0.0f, 1.0f) - 0.5f) / static_cast<float>(d);
    // Context vectors start at zero, as in the original trainer.
    std::vector<float> ctx(static_cast<size_t>(V) * d, 0.0f);

    // Negatives drawn from the unigram distribution raised to 3/4.
    std::vector<double> cum(V);
    double acc = 0.0;
    for (int i = 0; i < V; ++i) {
        acc += std::pow(static_cast<double>(counts[emb.words[i]]), 0.75);
        cum[i] = acc;
    }
    const auto draw_negative = [&] {
        const double u = rng.uniform(0.0f, 1.0f) * acc;
        return static_cast<int>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    };

    std::vector<std::vector<int>> enc;
    enc.reserve(sentences.size());
    for (const auto& sent : sentences) {
        std::vector<int> ids;
        for (const auto& tok : sent) {
            const auto it = emb.index.find(tok);
            if (it != emb.index.end()) ids.push_back(it->second);
        }
        if (!ids.empty()) enc.push_back(std::move(ids));
    }

    std::vector<float> centre_delta(d);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& sent : enc) {
            const int len = static_cast<int>(sent.size());
            for (int i = 0; i < len; ++i) {
                float* wc = emb.mat.data() + static_cast<size_t>(sent[i]) * d;
                for (int off = -cfg.window; off <= cfg.window; ++off) {
                    const int j = i + off;
                    if (off == 0 || j < 0 || j >= len) continue;
                    const int pos = sent[j];
                    std::fill(centre_delta.begin(), centre_delta.end(), 0.0f);
                    for (int k = 0; k <= cfg.negatives; ++k) {
                        const int target = k == 0 ? pos : draw_negative();
                        if (k > 0 && target == pos) continue;  // a drawn positive is no negative
                        float* ct = ctx.data() + static_cast<size_t>(target) * d;
                        double dot = 0.0;
                        for (int c = 0; c < d; ++c) dot += static_cast<double>(wc[c]) * ct[c];
                        const double sig = 1.0 / (1.0 + std::exp(-dot));
                        const float g = cfg.lr * static_cast<float>((k == 0 ? 1.0 : 0.0) - sig);
                        for (int c = 0; c < d; ++c) {
                            centre_delta[c] += g * ct[c];
                            ct[c] += g * wc[c];
                        }
                    }
                    for (int c = 0; c < d; ++c) wc[c] += centre_delta[c];
                }
            }
        }
    }
    return emb;
}

// ---------------------------------------------------------------------------
// Aspect lexicons

int AspectLexicons::aspect_of(const std::string& adjective) const {
    const auto it = assignment.find(adjective);
    return it == assignment.end() ? -1 : it->second;
}

AspectLexicons aspect_lexicon(const std::vector<std::string>& adjectives,
                              const std::vector<std::string>& aspect_words, const WordEmbeddings& emb,
                              float gamma) {
    if (aspect_words.empty()) throw ContractError("aspect_lexicon: no aspect words");
    if (!(gamma > 0.0f && gamma <= 1.0f)) throw ConfigError("aspect_lexicon: gamma outside (0, 1]");

    AspectLexicons lex;
    lex.aspect_words = aspect_words;
    lex.aspects.resize(aspect_words.size());
    std::vector<const float*> aw;
    for (const auto& word : aspect_words) {
        const float* v = emb.find(word);
        if (!v) throw ContractError("aspect_lexicon: aspect word '" + word + "' missing from embeddings");
        aw.push_back(v);
    }

    std::unordered_set<std::string> seen;
    for (const auto& adj : adjectives) {
        if (!seen.insert(adj).second) continue;
        const float* v = emb.find(adj);
        if (!v) {
            ++lex.skipped;
            lex.discarded.push_back(adj);
            continue;
        }
        // Negative similarities are clamped to zero so a strongly opposed
        // aspect cannot shrink (or flip) the score sum.
        double sum = 0.0;
        float best = 0.0f;
        int arg = 0;
        for (size_t k = 0; k < aw.size(); ++k) {
            const float s = std::max(0.0f, cosine(v, aw[k], emb.dim));
            sum += s;
            if (s > best) {
                best = s;
                arg = static_cast<int>(k);
            }
        }
        // All-zero scores mean no affinity to any aspect at all; treat like a
        // failed threshold rather than defaulting to aspect 0.
        if (best == 0.0f || best < gamma * sum) {
            lex.discarded.push_back(adj);
        } else {
            lex.aspects[arg].push_back(adj);
            lex.assignment.emplace(adj, arg);
        }
    }
    return lex;
}

int label_aspect(const std::vector<std::string>& y, const AspectLexicons& lex, const WordEmbeddings& emb) {
    const int A = lex.n_aspects();
    if (A < 1) throw ContractError("label_aspect: empty lexicons");

    std::vector<int> hits(A, 0);
    for (const auto& tok : y) {
        const int a = lex.aspect_of(tok);
        if (a >= 0) ++hits[a];
    }
    const int top = *std::max_element(hits.begin(), hits.end());

    std::vector<float> mean(static_cast<size_t>(emb.dim), 0.0f);
    int present = 0;
    for (const auto& tok : y) {
        if (const float* v = emb.find(tok)) {
            for (int c = 0; c < emb.dim; ++c) mean[c] += v[c];
            ++present;
        }
    }
    if (present > 0)
        for (auto& x : mean) x /= static_cast<float>(present);

    int best = 0;
    float best_cos = -2.0f;
    for (int k = 0; k < A; ++k) {
        if (hits[k] != top) continue;
        const float* aw = emb.find(lex.aspect_words[k]);
        const float c = (aw && present > 0) ? cosine(mean.data(), aw, emb.dim) : 0.0f;
        if (c > best_cos) {
            best_cos = c;
            best = k;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// User-category classifier

void CnnConfig::validate() const {
    if (dim < 1) throw ConfigError("cnn: dim must be >= 1");
    if (filters < 1) throw ConfigError("cnn: filters must be >= 1");
    if (windows.empty()) throw ConfigError("cnn: no convolution windows");
    for (int w : windows)
        if (w < 1) throw ConfigError("cnn: window must be >= 1");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("cnn: dropout outside [0, 1)");
    if (lr <= 0.0f) throw ConfigError("cnn: lr must be positive");
    if (beta2 <= 0.0f || beta2 >= 1.0f) throw ConfigError("cnn: beta2 outside (0, 1)");
    if (eps <= 0.0f) throw ConfigError("cnn: eps must be positive");
    if (epochs < 1 || batch_size < 1) throw ConfigError("cnn: epochs and batch_size must be >= 1");
}

namespace {

int max_window(const CnnConfig& cfg) { return *std::max_element(cfg.windows.begin(), cfg.windows.end()); }

int argmax_lowest(const float* v, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

std::vector<int> cnn_canonical_ids(const ClassifierM& m, const std::vector<std::string>& text) {
    std::vector<int> ids = m.vocab.encode(text);
    while (!ids.empty() && ids.back() == kPadId) ids.pop_back();
    const size_t floor = static_cast<size_t>(max_window(m.cfg));
    while (ids.size() < floor) ids.push_back(kPadId);
    return ids;
}

int cnn_forward(Tape& t, const ClassifierM& m, const std::vector<int>& ids, const DropoutCtx& drop) {
    if (static_cast<int>(ids.size()) < max_window(m.cfg))
        throw ContractError("cnn_forward: input shorter than the largest window; canonicalize first");

    // Graph leaves hold mutable pointers into the parameter buffers; only a
    // later backward() writes through them, so classification stays const.
    ParamSet& ps = const_cast<ParamSet&>(m.params);
    const int e = t.gather_rows(t.leaf(ps.get("cnn.emb")), ids);
    std::vector<int> pooled;
    for (const int w : m.cfg.windows) {
        const std::string base = "cnn.conv" + std::to_string(w);
        const int windows_mat = t.im2row(e, w);
        const int z = t.add_row(t.matmul(windows_mat, t.leaf(ps.get(base + ".w"))), t.leaf(ps.get(base + ".b")));
        const int p = t.max_cols(t.relu(z));
        pooled.push_back(t.reshape(p, Shape::mat(1, m.cfg.filters)));
    }
    int feat = pooled.size() == 1 ? pooled[0] : t.concat_cols(pooled);
    feat = apply_dropout(t, feat, drop);
    return t.add_row(t.matmul(feat, t.leaf(ps.get("cnn.out.w"))), t.leaf(ps.get("cnn.out.b")));
}

ClassifierM cnn_train(const std::vector<std::vector<std::string>>& texts, const std::vector<int>& labels,
                      int n_classes, const CnnConfig& cfg, std::vector<CnnEpoch>* history) {
    cfg.validate();
    if (texts.size() != labels.size()) throw ContractError("cnn_train: texts/labels size mismatch");
    if (texts.empty()) throw ContractError("cnn_train: empty training set");
    if (n_classes < 2) throw ConfigError("cnn_train: need at least two classes");
    std::unordered_set<int> distinct;
    for (const int l : labels) {
        if (l < 0 || l >= n_classes) throw ContractError("cnn_train: label " + std::to_string(l) + " out of range");
        distinct.insert(l);
    }
    if (distinct.size() < 2) throw ContractError("cnn_train: training data contains a single class");

    ClassifierM m;
    m.cfg = cfg;
    m.n_classes = n_classes;
    std::vector<const std::vector<std::string>*> streams;
    streams.reserve(texts.size());
    for (const auto& txt : texts) streams.push_back(&txt);
    m.vocab = Vocab::build(streams, 1);

    const int nf = cfg.filters;
    m.params.add("cnn.emb", Shape::mat(m.vocab.size(), cfg.dim));
    for (const int w : cfg.windows) {
        const std::string base = "cnn.conv" + std::to_string(w);
        m.params.add(base + ".w", Shape::mat(w * cfg.dim, nf));
        m.params.add(base + ".b", Shape::vec(nf));
    }
    m.params.add("cnn.out.w", Shape::mat(static_cast<int>(cfg.windows.size()) * nf, n_classes));
    m.params.add("cnn.out.b", Shape::vec(n_classes));
    init_parameters(m.params, cfg.seed);

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.beta2 = cfg.beta2;
    acfg.eps = cfg.eps;
    acfg.clip = false;  // the published classifier recipe does not clip
    Adam opt(m.params, acfg);

    std::vector<std::vector<int>> enc;
    enc.reserve(texts.size());
    for (const auto& txt : texts) enc.push_back(cnn_canonical_ids(m, txt));

    const size_t n = texts.size();
    const size_t bs = static_cast<size_t>(cfg.batch_size);
    const Rng shuffle_base = Rng(cfg.seed).fork(fnv1a("cnn-shuffle"));
    const Rng dropout_base = Rng(cfg.seed).fork(fnv1a("cnn-dropout"));

    Tape tape;
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto perm = shuffle_base.fork(static_cast<uint64_t>(epoch)).permutation(n);
        double epoch_loss = 0.0;
        size_t correct = 0;
        for (size_t lo = 0; lo < n; lo += bs) {
            const size_t hi = std::min(n, lo + bs);
            ++step;
            Rng drop_rng = dropout_base.fork(static_cast<uint64_t>(step));
            const DropoutCtx drop{cfg.dropout, &drop_rng};
            m.params.zero_grads();
            for (size_t i = lo; i < hi; ++i) {
                const size_t idx = perm[i];
                tape.reset();
                const int logits = cnn_forward(tape, m, enc[idx], drop);
                const int nll = tape.cross_entropy_mean(logits, {labels[idx]});
                epoch_loss += static_cast<double>(tape.scalar_val(nll));
                if (argmax_lowest(tape.val(logits), n_classes) == labels[idx]) ++correct;
                tape.backward(tape.scale(nll, 1.0f / static_cast<float>(hi - lo)));
            }
            opt.step();
        }
        if (history)
            history->push_back({epoch, epoch_loss / static_cast<double>(n),
                                static_cast<double>(correct) / static_cast<double>(n)});
    }
    return m;
}

CnnPrediction cnn_classify(const ClassifierM& m, const std::vector<std::string>& text) {
    Tape t;
    const int logits = cnn_forward(t, m, cnn_canonical_ids(m, text));
    const int probs = t.softmax_rows(logits);
    const float* pv = t.val(probs);
    CnnPrediction out;
    out.probs.assign(pv, pv + m.n_classes);
    out.category = argmax_lowest(pv, m.n_classes);
    return out;
}

void label_user_category(std::vector<Instance>& data, const ClassifierM& m) {
    for (Instance& inst : data) inst.a2 = cnn_classify(m, inst.y).category;
}

int prune_rare_categories(std::vector<Instance>& data, int min_count) {
    if (min_count < 1) throw ConfigError("prune_rare_categories: min_count must be >= 1");
    std::unordered_map<int, int> counts;
    for (const Instance& inst : data)
        if (inst.a2 > 0) ++counts[inst.a2];  // id 0 is already the unknown bucket
    int remapped = 0;
    for (Instance& inst : data) {
        if (inst.a2 > 0 && counts[inst.a2] < min_count) {
            inst.a2 = 0;
            ++remapped;
        }
    }
    return remapped;
}

}  // namespace kobe
