#include "kobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"

using namespace kobe;

namespace {

std::vector<std::string> toks(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

TEST_CASE("bleu is 100 when every candidate equals its reference") {
    const TokenCorpus refs = {toks("the cat sat on the mat"), toks("a fine red coat"), toks("x")};
    CHECK(bleu(refs, refs, false) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(bleu(refs, refs, true) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("bleu is 0 on disjoint corpora, smoothed or not") {
    const TokenCorpus cands = {toks("a b c d"), toks("e f g h")};
    const TokenCorpus refs = {toks("p q r s"), toks("t u v w")};
    CHECK(bleu(cands, refs, false) == 0.0);
    CHECK(bleu(cands, refs, true) == 0.0);  // unigram precision is never smoothed
}

TEST_CASE("bleu single-pair fixture with repeated words") {
    // candidate: the cat sat on the mat mat   (7 tokens)
    // reference: the cat sat on the mat       (6 tokens)
    // p1 = 6/7 (second "mat" clipped), p2 = 5/6, p3 = 4/5, p4 = 3/4;
    // the product telescopes to 3/7 and the candidate is longer, so BP = 1.
    const double got = bleu({toks("the cat sat on the mat mat")}, {toks("the cat sat on the mat")}, false);
    const double want = 100.0 * std::pow(3.0 / 7.0, 0.25);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(got == doctest::Approx(80.9107).epsilon(1e-4));
}

TEST_CASE("bleu two-pair fixture pools counts and applies the brevity penalty") {
    // pair 1: "a b c d" vs "a b c d e"  -> 4/4, 3/3, 2/2, 1/1
    // pair 2: "x y z w" vs "x q z w v"  -> 3/4, 1/3, 0/2, 0/1
    // pooled: p1 = 7/8, p2 = 4/6, p3 = 2/4, p4 = 1/2
    // lengths: 8 candidate vs 10 reference -> BP = exp(1 - 10/8)
    const TokenCorpus cands = {toks("a b c d"), toks("x y z w")};
    const TokenCorpus refs = {toks("a b c d e"), toks("x q z w v")};
    const double want =
        100.0 * std::exp(1.0 - 10.0 / 8.0) *
        std::pow((7.0 / 8.0) * (2.0 / 3.0) * (1.0 / 2.0) * (1.0 / 2.0), 0.25);
    CHECK(bleu(cands, refs, false) == doctest::Approx(want).epsilon(1e-12));
    CHECK(bleu(cands, refs, false) == doctest::Approx(48.1272).epsilon(1e-4));
}

TEST_CASE("bleu short-candidate fixture: unsmoothed zero, smoothed hand value") {
    // "the cat sat" has no 4-grams at all: the pooled 4-gram denominator is
    // zero, which the unsmoothed score treats as a zero precision.
    const TokenCorpus cands = {toks("the cat sat")};
    const TokenCorpus refs = {toks("the cat sat down")};
    CHECK(bleu(cands, refs, false) == 0.0);

    // Smoothed: p1 = 3/3 raw; the add-one orders are 3/3, 2/2, 1/1; only the
    // brevity penalty exp(1 - 4/3) remains.
    const double want = 100.0 * std::exp(1.0 - 4.0 / 3.0);
    CHECK(bleu(cands, refs, true) == doctest::Approx(want).epsilon(1e-12));
    CHECK(bleu(cands, refs, true) == doctest::Approx(71.6531).epsilon(1e-4));
}

TEST_CASE("bleu clipping fixture: repeated token capped at reference count") {
    // "the the the the" vs "the cat": p1 clips to 1/4. Unsmoothed dies at
    // p2 = 0/3; smoothed: 1/4 * 1/4 * 1/3 * 1/2 = 1/96 under the root.
    const TokenCorpus cands = {toks("the the the the")};
    const TokenCorpus refs = {toks("the cat")};
    CHECK(bleu(cands, refs, false) == 0.0);
    const double want = 100.0 * std::pow(1.0 / 96.0, 0.25);
    CHECK(bleu(cands, refs, true) == doctest::Approx(want).epsilon(1e-12));
    CHECK(bleu(cands, refs, true) == doctest::Approx(31.9471).epsilon(1e-4));
}

TEST_CASE("bleu corpus-pooling properties") {
    const TokenCorpus cands = {toks("a b c d"), toks("x y z w"), toks("the cat sat on the mat mat")};
    const TokenCorpus refs = {toks("a b c d e"), toks("x q z w v"), toks("the cat sat on the mat")};

    SUBCASE("reordering the corpus leaves the score unchanged") {
        const TokenCorpus cands2 = {cands[2], cands[0], cands[1]};
        const TokenCorpus refs2 = {refs[2], refs[0], refs[1]};
        CHECK(bleu(cands, refs, false) == bleu(cands2, refs2, false));
    }
    SUBCASE("duplicating the whole corpus leaves the score unchanged") {
        TokenCorpus cands2 = cands, refs2 = refs;
        cands2.insert(cands2.end(), cands.begin(), cands.end());
        refs2.insert(refs2.end(), refs.begin(), refs.end());
        CHECK(bleu(cands, refs, false) == bleu(cands2, refs2, false));
    }
    SUBCASE("appending one pair shifts the pooled counts as hand-derived") {
        // Fixture pairs 1+2 plus pair 1 again: pooled p1 = 11/12,
        // p2 = 7/9, p3 = 4/6, p4 = 2/3; lengths 12 vs 15.
        const TokenCorpus cands2 = {toks("a b c d"), toks("x y z w"), toks("a b c d")};
        const TokenCorpus refs2 = {toks("a b c d e"), toks("x q z w v"), toks("a b c d e")};
        const double want =
            100.0 * std::exp(1.0 - 15.0 / 12.0) *
            std::pow((11.0 / 12.0) * (7.0 / 9.0) * (4.0 / 6.0) * (2.0 / 3.0), 0.25);
        CHECK(bleu(cands2, refs2, false) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("bleu input validation and degenerate shapes") {
    CHECK_THROWS_AS(bleu({}, {}, false), ContractError);
    CHECK_THROWS_AS(bleu({toks("a")}, {}, false), ContractError);
    CHECK_THROWS_AS(bleu({toks("a")}, {toks("a"), toks("b")}, false), ContractError);

    // An all-empty candidate side scores 0 without dividing by zero.
    CHECK(bleu({{}}, {toks("a b")}, false) == 0.0);
    CHECK(bleu({{}}, {toks("a b")}, true) == 0.0);

    // One empty candidate among real ones still yields a sane score.
    const double v = bleu({toks("a b c d e"), {}}, {toks("a b c d e"), toks("f g")}, false);
    CHECK(v > 0.0);
    CHECK(v < 100.0);  // brevity penalty bites
}

TEST_CASE("distinct_n hand enumerations") {
    CHECK(distinct_n({toks("a b a b")}, 2) == 2);                 // ab, ba
    CHECK(distinct_n({toks("a b a b")}, 1) == 2);                 // a, b
    CHECK(distinct_n({toks("a a a a")}, 2) == 1);                 // aa
    CHECK(distinct_n({toks("a b c")}, 3) == 1);
    CHECK(distinct_n({toks("a b c")}, 4) == 0);                   // shorter than n
    CHECK(distinct_n({toks("a b c"), toks("b c d")}, 2) == 3);    // ab, bc, cd
    CHECK(distinct_n({toks("a b c"), toks("a b c")}, 2) == 2);    // set semantics
    CHECK(distinct_n({toks("x")}, 1) == 1);
    CHECK(distinct_n({}, 2) == 0);
    CHECK(distinct_n({toks("a b"), toks("c d"), toks("a b")}, 2) == 2);
}

TEST_CASE("distinct_n bound and validation") {
    CHECK_THROWS_AS(distinct_n({toks("a b")}, 0), ConfigError);
    CHECK_THROWS_AS(distinct_n({toks("a b")}, -3), ConfigError);

    Rng rng(88);
    for (int trial = 0; trial < 10; ++trial) {
        TokenCorpus corpus;
        std::uint64_t positions3 = 0, positions5 = 0;
        for (int i = 0; i < 8; ++i) {
            std::vector<std::string> sent;
            const int len = static_cast<int>(rng.below(9));
            for (int j = 0; j < len; ++j) sent.push_back(std::string(1, static_cast<char>('a' + rng.below(4))));
            positions3 += len >= 3 ? len - 2 : 0;
            positions5 += len >= 5 ? len - 4 : 0;
            corpus.push_back(sent);
        }
        CHECK(distinct_n(corpus, 3) <= positions3);
        CHECK(distinct_n(corpus, 5) <= positions5);

        TokenCorpus doubled = corpus;
        doubled.insert(doubled.end(), corpus.begin(), corpus.end());
        CHECK(distinct_n(doubled, 3) == distinct_n(corpus, 3));
    }
}

// ---------------------------------------------------------------------------
// Attribute capture

namespace {

WordEmbeddings axis_embeddings() {
    // Two aspects on orthogonal axes plus neutral fillers.
    WordEmbeddings emb;
    emb.dim = 2;
    const std::vector<std::pair<std::string, std::vector<float>>> entries = {
        {"looks", {1.0f, 0.0f}}, {"feels", {0.0f, 1.0f}}, {"shiny", {0.9f, 0.1f}},
        {"soft", {0.1f, 0.9f}},  {"thing", {0.5f, 0.5f}}, {"item", {0.4f, 0.6f}},
    };
    for (const auto& [word, vec] : entries) {
        emb.index[word] = static_cast<int>(emb.words.size());
        emb.words.push_back(word);
        emb.mat.insert(emb.mat.end(), vec.begin(), vec.end());
    }
    return emb;
}

ClassifierM tiny_classifier() {
    // Two trivially separable classes so classify() is deterministic enough
    // for fixtures; the metric treats it as a black box either way.
    std::vector<std::vector<std::string>> texts;
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) {
        const bool red = i % 2 == 0;
        texts.push_back({red ? "red" : "blue", "thing", red ? "warm" : "cold", "item", "end"});
        labels.push_back(red ? 0 : 1);
    }
    CnnConfig cfg;
    cfg.dim = 8;
    cfg.filters = 4;
    cfg.windows = {2, 3};
    cfg.dropout = 0.0f;
    cfg.epochs = 6;
    cfg.batch_size = 3;
    cfg.seed = 15;
    return cnn_train(texts, labels, 2, cfg);
}

}  // namespace

TEST_CASE("attribute capture scores") {
    const WordEmbeddings emb = axis_embeddings();
    // gamma low enough that both adjectives land in their aspect.
    const AspectLexicons lex = aspect_lexicon({"shiny", "soft"}, {"looks", "feels"}, emb, 0.5f);
    REQUIRE(lex.aspect_of("shiny") == 0);
    REQUIRE(lex.aspect_of("soft") == 1);
    const ClassifierM clf = tiny_classifier();

    std::vector<Instance> gold(3);
    gold[0].y = toks("soft thing red warm");
    gold[0].a1 = 1;
    gold[1].y = toks("shiny thing blue cold");
    gold[1].a1 = 0;
    gold[2].y = toks("soft item red warm");
    gold[2].a1 = 1;
    for (size_t i = 0; i < gold.size(); ++i) gold[i].a2 = static_cast<int>(i % 2);

    SUBCASE("generated identical to gold captures everything") {
        TokenCorpus generated;
        for (const Instance& g : gold) generated.push_back(g.y);
        const CaptureResult r = attribute_capture(generated, gold, lex, emb, clf, false);
        CHECK(r.aspect_acc == 1.0);
        CHECK(r.user_acc == 1.0);
        for (size_t i = 0; i < gold.size(); ++i) {
            CHECK(r.aspect_pred[i] == r.aspect_ref[i]);
            CHECK(r.user_pred[i] == r.user_ref[i]);
        }
    }

    SUBCASE("two of three aspect matches score 2/3") {
        // Instance 1 generates the wrong aspect word; the tagger sees aspect
        // 1 where the reference-side tagging says aspect 0.
        const TokenCorpus generated = {toks("soft item"), toks("soft item"), toks("soft thing")};
        const CaptureResult r = attribute_capture(generated, gold, lex, emb, clf, false);
        CHECK(r.aspect_pred == std::vector<int>{1, 1, 1});
        CHECK(r.aspect_ref == std::vector<int>{1, 0, 1});
        CHECK(r.aspect_acc == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    }

    SUBCASE("matches the direct indicator-loop restatement") {
        const TokenCorpus generated = {toks("shiny thing blue"), toks("soft item red"), toks("shiny item")};
        const CaptureResult r = attribute_capture(generated, gold, lex, emb, clf, false);
        int aspect_hits = 0, user_hits = 0;
        for (size_t i = 0; i < generated.size(); ++i) {
            if (label_aspect(generated[i], lex, emb) == label_aspect(gold[i].y, lex, emb)) ++aspect_hits;
            if (cnn_classify(clf, generated[i]).category == cnn_classify(clf, gold[i].y).category) ++user_hits;
        }
        CHECK(r.aspect_acc == doctest::Approx(aspect_hits / 3.0).epsilon(1e-12));
        CHECK(r.user_acc == doctest::Approx(user_hits / 3.0).epsilon(1e-12));
    }

    SUBCASE("stored-label comparison uses the instance annotations") {
        // Tagged aspects: {1, 1, 1} against stored {1, 0, 1} -> 2/3.
        const TokenCorpus generated = {toks("soft item"), toks("soft item"), toks("soft thing")};
        const CaptureResult r = attribute_capture(generated, gold, lex, emb, clf, true);
        CHECK(r.aspect_ref == std::vector<int>{1, 0, 1});
        CHECK(r.aspect_acc == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(r.user_ref == std::vector<int>{0, 1, 0});
    }

    SUBCASE("validation") {
        CHECK_THROWS_AS(attribute_capture({}, {}, lex, emb, clf, false), ContractError);
        CHECK_THROWS_AS(attribute_capture({toks("a")}, gold, lex, emb, clf, false), ContractError);
    }
}

TEST_CASE("evaluation reports: composition, json, and table") {
    const TokenCorpus refs = {toks("the cat sat on the mat"), toks("a fine red coat here now")};
    EvalReport rep = evaluate_corpus(refs, refs, false);
    CHECK(rep.bleu == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(rep.distinct.at(3) == distinct_n(refs, 3));
    CHECK(rep.distinct.at(4) == distinct_n(refs, 4));
    CHECK(rep.distinct.at(5) == distinct_n(refs, 5));
    REQUIRE(rep.instances.size() == 2);
    CHECK(rep.instances[0].candidate == "the cat sat on the mat");
    CHECK(rep.instances[1].reference == "a fine red coat here now");
    CHECK(rep.aspect_capture == -1.0);

    SUBCASE("json hides capture until it is merged") {
        const nlohmann::ordered_json j = report_json(rep);
        CHECK(j.at("bleu").get<double>() == doctest::Approx(100.0));
        CHECK(j.at("aspect_capture").is_null());
        CHECK(j.at("distinct").at("4").get<std::uint64_t>() == rep.distinct.at(4));
        CHECK(j.at("instances").size() == 2);
        CHECK(!j.at("instances")[0].contains("aspect_pred"));
    }

    SUBCASE("merged capture lands in fields, records, json, and table") {
        CaptureResult cap;
        cap.aspect_acc = 0.5;
        cap.user_acc = 1.0;
        cap.aspect_pred = {0, 1};
        cap.aspect_ref = {0, 0};
        cap.user_pred = {1, 1};
        cap.user_ref = {1, 1};
        merge_capture(rep, cap);
        CHECK(rep.aspect_capture == 0.5);
        CHECK(rep.instances[1].aspect_pred == 1);
        CHECK(rep.instances[1].aspect_ref == 0);

        const nlohmann::ordered_json j = report_json(rep);
        CHECK(j.at("aspect_capture").get<double>() == 0.5);
        CHECK(j.at("instances")[1].at("aspect_pred").get<int>() == 1);

        const std::string table = report_table(rep);
        CHECK(table.find("aspect-capture") != std::string::npos);
        CHECK(table.find("user-capture") != std::string::npos);
    }

    SUBCASE("capture size mismatch is rejected") {
        CaptureResult cap;
        cap.aspect_pred = {0};
        CHECK_THROWS_AS(merge_capture(rep, cap), ContractError);
    }

    SUBCASE("table is fixed-order") {
        const std::string table = report_table(rep);
        const size_t p_bleu = table.find("bleu");
        const size_t p_d3 = table.find("distinct-3");
        const size_t p_d5 = table.find("distinct-5");
        const size_t p_n = table.find("instances");
        REQUIRE(p_bleu != std::string::npos);
        CHECK(p_bleu < p_d3);
        CHECK(p_d3 < p_d5);
        CHECK(p_d5 < p_n);
    }
}
