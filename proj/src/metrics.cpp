#include "kobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace kobe {

namespace {

// n-grams as strings with an unprintable joiner, so they can key the
// standard hash containers. Tokens come from whitespace splitting and can
// never contain the separator byte.
constexpr char kJoin = '\x1f';

std::string ngram_key(const std::vector<std::string>& tokens, size_t start, int n) {
    std::string key;
    for (int i = 0; i < n; ++i) {
        if (i) key += kJoin;
        key += tokens[start + i];
    }
    return key;
}

std::unordered_map<std::string, std::uint64_t> ngram_counts(const std::vector<std::string>& tokens, int n) {
    std::unordered_map<std::string, std::uint64_t> counts;
    if (static_cast<int>(tokens.size()) >= n)
        for (size_t s = 0; s + n <= tokens.size(); ++s) ++counts[ngram_key(tokens, s, n)];
    return counts;
}

}  // namespace

double bleu(const TokenCorpus& candidates, const TokenCorpus& references, bool smoothing) {
    if (candidates.empty()) throw ContractError("bleu: empty corpus");
    if (candidates.size() != references.size())
        throw ContractError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                            std::to_string(references.size()) + " references");

    std::uint64_t matched[4] = {0, 0, 0, 0};  // clipped matches, pooled
    std::uint64_t total[4] = {0, 0, 0, 0};    // candidate n-grams, pooled
    std::uint64_t cand_len = 0, ref_len = 0;

    for (size_t i = 0; i < candidates.size(); ++i) {
        const std::vector<std::string>& cand = candidates[i];
        const std::vector<std::string>& ref = references[i];
        cand_len += cand.size();
        ref_len += ref.size();
        for (int n = 1; n <= 4; ++n) {
            const auto ref_counts = ngram_counts(ref, n);
            for (const auto& [key, count] : ngram_counts(cand, n)) {
                total[n - 1] += count;
                const auto it = ref_counts.find(key);
                if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
            }
        }
    }
    if (cand_len == 0) return 0.0;

    double log_precision = 0.0;
    for (int n = 1; n <= 4; ++n) {
        double num = static_cast<double>(matched[n - 1]);
        double den = static_cast<double>(total[n - 1]);
        if (smoothing && n > 1) {  // add-one on the higher orders only
            num += 1.0;
            den += 1.0;
        }
        if (num == 0.0 || den == 0.0) return 0.0;
        log_precision += 0.25 * std::log(num / den);
    }

    const double bp =
        cand_len >= ref_len ? 1.0
                            : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return 100.0 * bp * std::exp(log_precision);
}

std::uint64_t distinct_n(const TokenCorpus& candidates, int n) {
    if (n < 1) throw ConfigError("distinct_n: n must be >= 1, got " + std::to_string(n));
    std::unordered_set<std::string> seen;
    for (const std::vector<std::string>& cand : candidates)
        if (static_cast<int>(cand.size()) >= n)
            for (size_t s = 0; s + n <= cand.size(); ++s) seen.insert(ngram_key(cand, s, n));
    return seen.size();
}

CaptureResult attribute_capture(const TokenCorpus& generated, const std::vector<Instance>& gold,
                                const AspectLexicons& lex, const WordEmbeddings& emb,
                                const ClassifierM& clf, bool against_stored_labels) {
    if (generated.empty()) throw ContractError("attribute_capture: empty corpus");
    if (generated.size() != gold.size())
        throw ContractError("attribute_capture: " + std::to_string(generated.size()) +
                            " generated descriptions vs " + std::to_string(gold.size()) + " instances");

    CaptureResult r;
    std::uint64_t aspect_hits = 0, user_hits = 0;
    for (size_t i = 0; i < generated.size(); ++i) {
        const int ap = label_aspect(generated[i], lex, emb);
        const int up = cnn_classify(clf, generated[i]).category;
        int ar, ur;
        if (against_stored_labels) {
            ar = gold[i].a1;
            ur = gold[i].a2;
        } else {
            ar = label_aspect(gold[i].y, lex, emb);
            ur = cnn_classify(clf, gold[i].y).category;
        }
        r.aspect_pred.push_back(ap);
        r.aspect_ref.push_back(ar);
        r.user_pred.push_back(up);
        r.user_ref.push_back(ur);
        if (ap == ar) ++aspect_hits;
        if (up == ur) ++user_hits;
    }
    r.aspect_acc = static_cast<double>(aspect_hits) / static_cast<double>(generated.size());
    r.user_acc = static_cast<double>(user_hits) / static_cast<double>(generated.size());
    return r;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

}  // namespace

EvalReport evaluate_corpus(const TokenCorpus& candidates, const TokenCorpus& references, bool smoothing) {
    EvalReport rep;
    rep.bleu = bleu(candidates, references, smoothing);
    rep.smoothed = smoothing;
    for (int n : {3, 4, 5}) rep.distinct[n] = distinct_n(candidates, n);
    rep.instances.reserve(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i) {
        InstanceRecord rec;
        rec.candidate = join_tokens(candidates[i]);
        rec.reference = join_tokens(references[i]);
        rep.instances.push_back(std::move(rec));
    }
    return rep;
}

void merge_capture(EvalReport& report, const CaptureResult& capture) {
    if (capture.aspect_pred.size() != report.instances.size())
        throw ContractError("merge_capture: " + std::to_string(capture.aspect_pred.size()) +
                            " capture labels vs " + std::to_string(report.instances.size()) +
                            " report instances");
    report.aspect_capture = capture.aspect_acc;
    report.user_capture = capture.user_acc;
    for (size_t i = 0; i < report.instances.size(); ++i) {
        report.instances[i].aspect_pred = capture.aspect_pred[i];
        report.instances[i].aspect_ref = capture.aspect_ref[i];
        report.instances[i].user_pred = capture.user_pred[i];
        report.instances[i].user_ref = capture.user_ref[i];
    }
}

nlohmann::ordered_json report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["bleu"] = report.bleu;
    j["smoothed"] = report.smoothed;
    for (const auto& [n, count] : report.distinct) j["distinct"][std::to_string(n)] = count;
    j["aspect_capture"] =
        report.aspect_capture < 0 ? nlohmann::ordered_json() : nlohmann::ordered_json(report.aspect_capture);
    j["user_capture"] =
        report.user_capture < 0 ? nlohmann::ordered_json() : nlohmann::ordered_json(report.user_capture);
    j["instances"] = nlohmann::ordered_json::array();
    for (const InstanceRecord& rec : report.instances) {
        nlohmann::ordered_json r;
        r["candidate"] = rec.candidate;
        r["reference"] = rec.reference;
        if (rec.aspect_pred >= 0 || rec.aspect_ref >= 0) {
            r["aspect_pred"] = rec.aspect_pred;
            r["aspect_ref"] = rec.aspect_ref;
            r["user_pred"] = rec.user_pred;
            r["user_ref"] = rec.user_ref;
        }
        j["instances"].push_back(std::move(r));
    }
    return j;
}

std::string report_table(const EvalReport& report) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);
    out << "bleu            " << report.bleu << (report.smoothed ? "  (smoothed)" : "") << "\n";
    for (const auto& [n, count] : report.distinct) out << "distinct-" << n << "      " << count << "\n";
    if (report.aspect_capture >= 0) {
        out.precision(4);
        out << "aspect-capture  " << report.aspect_capture << "\n";
        out << "user-capture    " << report.user_capture << "\n";
        out.precision(2);
    }
    out << "instances       " << report.instances.size() << "\n";
    return out.str();
}

}  // namespace kobe
