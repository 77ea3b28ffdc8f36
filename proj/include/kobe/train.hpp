#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "kobe/model.hpp"

// Optimization loop: Adam with elementwise gradient clipping, token-weighted
// mini-batches, periodic validation, JSONL metrics, and a checkpoint format
// that restores both parameters and optimizer moments for exact resumption.

namespace kobe {

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.998f;
    float eps = 1e-9f;
    // Elementwise clamp applied to gradients before the update.
    bool clip = true;
    float clip_lo = -1.0f;
    float clip_hi = 1.0f;
};

// Elementwise clamp of every gradient buffer in the set.
void clip_grads(ParamSet& params, float lo = -1.0f, float hi = 1.0f);

// Adam with bias correction over a parameter set it does not own. Moments are
// kept per parameter in creation order; restore() reinstates them from a
// checkpoint so a resumed run continues the same trajectory.
class Adam {
  public:
    explicit Adam(ParamSet& params, AdamConfig cfg = {});
    Adam(const Adam&) = delete;
    Adam& operator=(const Adam&) = delete;

    // One update from the gradients currently in the set. A non-finite
    // gradient aborts (naming the parameter) before any state changes.
    void step();

    const AdamConfig& config() const { return cfg_; }
    int64_t t() const { return t_; }
    const std::vector<std::vector<float>>& m_buffers() const { return m_; }
    const std::vector<std::vector<float>>& v_buffers() const { return v_; }
    void restore(std::vector<std::vector<float>> m, std::vector<std::vector<float>> v, int64_t t);

  private:
    ParamSet& params_;
    AdamConfig cfg_;
    std::vector<std::vector<float>> m_, v_;
    int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
    int batch_size = 64;
    int epochs = 1;
    int64_t max_steps = 0;  // 0: bounded by epochs alone
    float dropout = 0.1f;
    int log_every = 50;        // training-loss log cadence in steps
    int validate_every = 0;    // 0: once at each epoch end
    int checkpoint_every = 0;  // 0: only the final checkpoint
    AdamConfig adam;
    uint64_t seed = 1;  // shuffle and dropout streams
    // Fingerprints recorded in checkpoints so a resume can detect a rebuilt,
    // differently-ordered vocabulary.
    uint64_t src_vocab_hash = 0;
    uint64_t tgt_vocab_hash = 0;
};

// Where in the schedule a run starts; a fresh run is {0, 0, 0} and a resumed
// one is the position stored in the checkpoint.
struct TrainPosition {
    int64_t step = 0;
    int epoch = 0;
    int batch = 0;
};

struct MetricsEntry {
    int64_t step = 0;
    std::string split;  // "train" or "valid"
    double loss = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    int64_t steps = 0;  // total optimizer steps taken (includes resumed-from ones)
    double train_loss = std::numeric_limits<double>::quiet_NaN();  // last batch, nats/token
    double valid_loss = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
    std::string error;  // divergence diagnostics, empty otherwise
    std::vector<MetricsEntry> log;
    std::string checkpoint_dir;  // last checkpoint written, empty if none
};

// Token-weighted mean negative log-likelihood (nats/token) over a dataset,
// dropout off.
double evaluate_loss(const KobeModel& m, const std::vector<EncodedInstance>& data);

// Teacher-forced maximum-likelihood training. Batches follow a per-epoch
// seeded shuffle; the batch loss weights instances by target-token count, so
// it reads in nats/token. When out_dir is non-empty, metrics.jsonl and
// checkpoint/ are written beneath it. A non-finite loss or gradient stops the
// run with diverged set and the last good checkpoint untouched.
TrainResult train_model(KobeModel& m, Adam& opt, const std::vector<EncodedInstance>& train_set,
                        const std::vector<EncodedInstance>& valid_set, const TrainConfig& cfg,
                        const std::string& out_dir = "", TrainPosition start = {});

// ---------------------------------------------------------------------------
// Checkpoints

// A checkpoint directory holds manifest.json and params.bin. The manifest
// records the model spec, the training position, vocabulary fingerprints, and
// the name/shape/offset of every parameter; the blob is raw little-endian
// float32 — all parameters in creation order, then, when optimizer state is
// included, the first and second moments in the same order.
struct CheckpointMeta {
    uint64_t seed = 0;  // training stream seed
    int64_t step = 0;
    int epoch = 0;
    int batch = 0;
    uint64_t src_vocab_hash = 0;
    uint64_t tgt_vocab_hash = 0;
};

struct Checkpoint {
    KobeModel model;
    CheckpointMeta meta;
    bool has_optimizer = false;
    std::vector<std::vector<float>> adam_m, adam_v;
    int64_t adam_t = 0;
};

void save_checkpoint(const std::string& dir, const KobeModel& m, const CheckpointMeta& meta,
                     const Adam* opt = nullptr);
Checkpoint load_checkpoint(const std::string& dir);

// Model spec serialization used by the manifest (and the CLI's run records).
std::string model_spec_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

}  // namespace kobe
