#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "kobe/data.hpp"
#include "kobe/params.hpp"
#include "kobe/tensor.hpp"
#include "kobe/transformer.hpp"

// Attribute annotation: word embeddings trained on descriptions, an
// aspect lexicon built from adjective/aspect-word similarities, hit-count
// aspect labeling, and a convolutional classifier that assigns user
// categories from feedback-labeled texts.

namespace kobe {

// ---------------------------------------------------------------------------
// Word embeddings (skip-gram with negative sampling)

struct WordEmbeddings {
    int dim = 0;
    std::vector<std::string> words;
    std::unordered_map<std::string, int> index;
    std::vector<float> mat;  // row-major [words x dim]

    int n_words() const { return static_cast<int>(words.size()); }
    const float* row(int i) const;
    const float* find(const std::string& word) const;  // nullptr when absent
};

struct SgnsConfig {
    int dim = 32;
    int window = 3;
    int negatives = 5;
    int epochs = 5;
    float lr = 0.025f;
    int min_count = 1;
};

WordEmbeddings sgns_train(const std::vector<std::vector<std::string>>& sentences, const SgnsConfig& cfg,
                          uint64_t seed);

// Cosine similarity; a zero vector on either side yields 0.
float cosine(const float* a, const float* b, int dim);

// ---------------------------------------------------------------------------
// Aspect lexicons and labeling

struct AspectLexicons {
    std::vector<std::string> aspect_words;          // one representative word per aspect
    std::vector<std::vector<std::string>> aspects;  // assigned adjectives, per aspect
    std::vector<std::string> discarded;
    int skipped = 0;  // adjectives absent from the embeddings (also discarded)

    int n_aspects() const { return static_cast<int>(aspect_words.size()); }
    int aspect_of(const std::string& adjective) const;  // -1 when not assigned

    std::unordered_map<std::string, int> assignment;  // adjective -> aspect id
};

// Sorts adjectives into aspects by cosine similarity to each aspect word
// (negative similarities count as 0). An adjective whose best score is below
// gamma times the score sum — or whose scores are all zero — is discarded.
// Ties go to the lowest aspect index; duplicates keep the first occurrence.
AspectLexicons aspect_lexicon(const std::vector<std::string>& adjectives,
                              const std::vector<std::string>& aspect_words, const WordEmbeddings& emb,
                              float gamma = 0.8f);

// Aspect whose lexicon the description hits most often. Ties — including no
// hits at all — fall back to cosine between the description's mean embedding
// and the aspect word, then to the lowest index.
int label_aspect(const std::vector<std::string>& y, const AspectLexicons& lex, const WordEmbeddings& emb);

// ---------------------------------------------------------------------------
// User-category classifier (convolution over word windows, max-pooled)

struct CnnConfig {
    int dim = 100;
    int filters = 100;  // per window size
    std::vector<int> windows = {3, 4, 5};
    float dropout = 0.5f;
    float lr = 1e-3f;
    float beta2 = 0.999f;  // published classifier recipe differs from the generator's
    float eps = 1e-8f;
    int epochs = 10;
    int batch_size = 64;
    uint64_t seed = 1;

    void validate() const;
};

struct ClassifierM {
    CnnConfig cfg;
    Vocab vocab;
    int n_classes = 0;
    ParamSet params;
};

struct CnnEpoch {
    int epoch = 0;
    double loss = 0.0;      // mean training cross-entropy, nats
    double accuracy = 0.0;  // training-pass argmax accuracy
};

// Inputs are canonicalized before the convolution: trailing padding is
// stripped, then the sequence is right-padded up to the largest window, so
// extra trailing pads can never change the prediction.
std::vector<int> cnn_canonical_ids(const ClassifierM& m, const std::vector<std::string>& text);

// Logits [1 x n_classes] for canonical ids; exposed for gradient checks.
int cnn_forward(Tape& t, const ClassifierM& m, const std::vector<int>& ids, const DropoutCtx& drop = {});

ClassifierM cnn_train(const std::vector<std::vector<std::string>>& texts, const std::vector<int>& labels,
                      int n_classes, const CnnConfig& cfg, std::vector<CnnEpoch>* history = nullptr);

struct CnnPrediction {
    int category = 0;
    std::vector<float> probs;  // sums to 1
};

CnnPrediction cnn_classify(const ClassifierM& m, const std::vector<std::string>& text);

// Sets a2 = cnn_classify(y) on every instance, in order.
void label_user_category(std::vector<Instance>& data, const ClassifierM& m);

// Remaps user categories occurring fewer than min_count times to the reserved
// unknown id 0. Unannotated instances (a2 = -1) are left alone. Returns the
// number of instances remapped.
int prune_rare_categories(std::vector<Instance>& data, int min_count);

}  // namespace kobe
