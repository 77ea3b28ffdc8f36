#include "kobe/train.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "kobe/kernels.hpp"

// The checkpoint blob is raw little-endian float32; this code reads and
// writes host byte order directly.
static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace kobe {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Optimizer

void clip_grads(ParamSet& params, float lo, float hi) {
    if (lo > hi) throw ConfigError("clip_grads: lo > hi");
    const auto& K = kern::active();
    for (Parameter* p : params.all()) K.clamp(p->grad.data(), p->grad.data(), lo, hi, p->grad.size());
}

Adam::Adam(ParamSet& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
    if (cfg_.lr < 0.0f) throw ConfigError("Adam: negative learning rate");
    if (cfg_.beta1 < 0.0f || cfg_.beta1 >= 1.0f || cfg_.beta2 < 0.0f || cfg_.beta2 >= 1.0f)
        throw ConfigError("Adam: betas must lie in [0, 1)");
    if (cfg_.eps <= 0.0f) throw ConfigError("Adam: eps must be positive");
    if (cfg_.clip && cfg_.clip_lo > cfg_.clip_hi) throw ConfigError("Adam: clip_lo > clip_hi");
    for (const Parameter* p : params_.all()) {
        m_.emplace_back(p->numel(), 0.0f);
        v_.emplace_back(p->numel(), 0.0f);
    }
}

void Adam::step() {
    auto ps = params_.all();
    // Abort before touching moments or parameters so a poisoned batch leaves
    // the optimizer in its last good state.
    for (const Parameter* p : ps)
        for (float g : p->grad)
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p->name + "'");

    const auto& K = kern::active();
    if (cfg_.clip)
        for (Parameter* p : ps) K.clamp(p->grad.data(), p->grad.data(), cfg_.clip_lo, cfg_.clip_hi, p->grad.size());

    ++t_;
    const float inv_corr1 = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(cfg_.beta1), t_)));
    const float inv_corr2 = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(cfg_.beta2), t_)));
    for (size_t i = 0; i < ps.size(); ++i) {
        Parameter* p = ps[i];
        K.adam(p->value.data(), p->grad.data(), m_[i].data(), v_[i].data(), p->numel(), cfg_.lr, cfg_.beta1,
               cfg_.beta2, cfg_.eps, inv_corr1, inv_corr2);
    }
}

void Adam::restore(std::vector<std::vector<float>> m, std::vector<std::vector<float>> v, int64_t t) {
    auto ps = params_.all();
    if (t < 0) throw ContractError("Adam::restore: negative step counter");
    if (m.size() != ps.size() || v.size() != ps.size())
        throw ContractError("Adam::restore: moment count does not match parameter count");
    for (size_t i = 0; i < ps.size(); ++i)
        if (m[i].size() != ps[i]->numel() || v[i].size() != ps[i]->numel())
            throw ContractError("Adam::restore: moment shape mismatch for '" + ps[i]->name + "'");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
}

// ---------------------------------------------------------------------------
// Loss evaluation

namespace {

double count_loss_tokens(const std::vector<int>& targets) {
    double c = 0.0;
    for (int id : targets)
        if (id != kPadId) ++c;
    return c;
}

}  // namespace

double evaluate_loss(const KobeModel& m, const std::vector<EncodedInstance>& data) {
    if (data.empty()) throw ContractError("evaluate_loss: empty dataset");
    Tape tape;
    double total = 0.0, tokens = 0.0;
    for (const EncodedInstance& e : data) {
        tape.reset();
        const int logits = kobe_forward(tape, m, e.x, e.w, {e.a1, e.a2}, e.y);
        const auto targets = teacher_targets(e.y);
        const double n_tok = count_loss_tokens(targets);
        total += static_cast<double>(tape.scalar_val(nll_loss(tape, logits, targets))) * n_tok;
        tokens += n_tok;
    }
    return total / tokens;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train_model(KobeModel& m, Adam& opt, const std::vector<EncodedInstance>& train_set,
                        const std::vector<EncodedInstance>& valid_set, const TrainConfig& cfg,
                        const std::string& out_dir, TrainPosition start) {
    if (train_set.empty()) throw ContractError("train_model: empty training set");
    if (cfg.batch_size < 1) throw ConfigError("train_model: batch_size must be >= 1");
    if (cfg.epochs < 0 || cfg.max_steps < 0) throw ConfigError("train_model: negative schedule");
    if (cfg.dropout < 0.0f || cfg.dropout >= 1.0f) throw ConfigError("train_model: dropout outside [0, 1)");
    if (start.step < 0 || start.epoch < 0 || start.batch < 0)
        throw ContractError("train_model: negative start position");

    const size_t n = train_set.size();
    const size_t bs = static_cast<size_t>(cfg.batch_size);
    const int n_batches = static_cast<int>((n + bs - 1) / bs);

    std::ofstream metrics;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const std::string path = out_dir + "/metrics.jsonl";
        // A resumed run appends so the log stays one continuous record.
        metrics.open(path, start.step == 0 ? std::ios::trunc : std::ios::app);
        if (!metrics) throw IoError("cannot write metrics log " + path);
    }

    TrainResult res;
    res.steps = start.step;

    const auto t0 = std::chrono::steady_clock::now();
    const auto wall_ms = [&t0] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };
    const auto log_entry = [&](int64_t step, const char* split, double loss) {
        res.log.push_back({step, split, loss, wall_ms()});
        if (metrics.is_open()) {
            ordered_json j;
            j["step"] = step;
            j["split"] = split;
            j["loss"] = loss;
            j["wall_ms"] = res.log.back().wall_ms;
            metrics << j.dump() << "\n" << std::flush;
        }
    };
    const auto save = [&](const TrainPosition& pos) {
        if (out_dir.empty()) return;
        CheckpointMeta meta;
        meta.seed = cfg.seed;
        meta.step = pos.step;
        meta.epoch = pos.epoch;
        meta.batch = pos.batch;
        meta.src_vocab_hash = cfg.src_vocab_hash;
        meta.tgt_vocab_hash = cfg.tgt_vocab_hash;
        res.checkpoint_dir = out_dir + "/checkpoint";
        save_checkpoint(res.checkpoint_dir, m, meta, &opt);
    };

    // Independent streams so adding a batch never shifts the next epoch's
    // shuffle, and a resumed step draws the exact dropout masks the
    // uninterrupted run would have.
    const Rng shuffle_base = Rng(cfg.seed).fork(fnv1a("shuffle"));
    const Rng dropout_base = Rng(cfg.seed).fork(fnv1a("dropout"));

    Tape tape;
    TrainPosition pos = start;
    int64_t last_valid_step = -1;
    bool stop = false;
    for (int epoch = start.epoch; epoch < cfg.epochs && !stop; ++epoch) {
        const auto perm = shuffle_base.fork(static_cast<uint64_t>(epoch)).permutation(n);
        for (int b = (epoch == start.epoch) ? start.batch : 0; b < n_batches && !stop; ++b) {
            const size_t lo = static_cast<size_t>(b) * bs;
            const size_t hi = std::min(n, lo + bs);
            double batch_tokens = 0.0;
            for (size_t i = lo; i < hi; ++i)
                batch_tokens += count_loss_tokens(teacher_targets(train_set[perm[i]].y));

            const int64_t step = res.steps + 1;
            Rng drop_rng = dropout_base.fork(static_cast<uint64_t>(step));
            const DropoutCtx drop{cfg.dropout, &drop_rng};

            // Per-instance graphs; scaling each loss by its token share makes
            // the accumulated gradient that of the token-weighted batch mean.
            m.params.zero_grads();
            double batch_loss = 0.0;
            try {
                for (size_t i = lo; i < hi; ++i) {
                    const EncodedInstance& e = train_set[perm[i]];
                    tape.reset();
                    const int logits = kobe_forward(tape, m, e.x, e.w, {e.a1, e.a2}, e.y, drop);
                    const auto targets = teacher_targets(e.y);
                    const int nll = nll_loss(tape, logits, targets);
                    const double n_tok = count_loss_tokens(targets);
                    const double item = static_cast<double>(tape.scalar_val(nll));
                    if (!std::isfinite(item)) {
                        batch_loss = item;
                        break;
                    }
                    tape.backward(tape.scale(nll, static_cast<float>(n_tok / batch_tokens)));
                    batch_loss += item * n_tok / batch_tokens;
                }
            } catch (const NumericError& e) {
                // The numeric guards inside the graph (softmax, norms) spot
                // the blow-up before the loss does; same divergence, same exit.
                res.diverged = true;
                res.error = std::string(e.what()) + " at step " + std::to_string(step);
                return res;
            }
            if (!std::isfinite(batch_loss)) {
                res.diverged = true;
                res.error = "non-finite training loss at step " + std::to_string(step);
                return res;
            }
            try {
                opt.step();
            } catch (const NumericError& e) {
                res.diverged = true;
                res.error = std::string(e.what()) + " at step " + std::to_string(step);
                return res;
            }

            res.steps = step;
            res.train_loss = batch_loss;
            pos = (b + 1 < n_batches) ? TrainPosition{step, epoch, b + 1} : TrainPosition{step, epoch + 1, 0};
            if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
            const bool last_step = stop || (epoch == cfg.epochs - 1 && b == n_batches - 1);

            if (cfg.log_every > 0 && (step % cfg.log_every == 0 || last_step)) log_entry(step, "train", batch_loss);
            if (!valid_set.empty() && cfg.validate_every > 0 && step % cfg.validate_every == 0) {
                res.valid_loss = evaluate_loss(m, valid_set);
                last_valid_step = step;
                log_entry(step, "valid", res.valid_loss);
            }
            if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && !last_step) save(pos);
        }
        if (!stop && !valid_set.empty() && cfg.validate_every == 0) {
            res.valid_loss = evaluate_loss(m, valid_set);
            last_valid_step = res.steps;
            log_entry(res.steps, "valid", res.valid_loss);
        }
    }

    if (!valid_set.empty() && last_valid_step != res.steps) {
        res.valid_loss = evaluate_loss(m, valid_set);
        log_entry(res.steps, "valid", res.valid_loss);
    }
    save(pos);
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string model_spec_json(const ModelSpec& spec) {
    ordered_json j;
    j["d_model"] = spec.cfg.d_model;
    j["d_ff"] = spec.cfg.d_ff;
    j["heads"] = spec.cfg.heads;
    j["encoder_layers"] = spec.cfg.encoder_layers;
    j["decoder_layers"] = spec.cfg.decoder_layers;
    j["dropout"] = spec.cfg.dropout;
    j["max_positions"] = spec.cfg.max_positions;
    j["src_vocab"] = spec.cfg.src_vocab;
    j["tgt_vocab"] = spec.cfg.tgt_vocab;
    j["scale_embeddings"] = spec.cfg.scale_embeddings;
    j["tied_output"] = spec.cfg.tied_output;
    j["fusion"] = to_string(spec.fusion.strategy);
    j["attr_use"] = to_string(spec.fusion.use);
    j["use_knowledge"] = spec.use_knowledge;
    j["n_aspects"] = spec.n_aspects;
    j["n_categories"] = spec.n_categories;
    return j.dump();
}

ModelSpec model_spec_from_json(const std::string& text) {
    ModelSpec spec;
    try {
        const json j = json::parse(text);
        spec.cfg.d_model = j.at("d_model").get<int>();
        spec.cfg.d_ff = j.at("d_ff").get<int>();
        spec.cfg.heads = j.at("heads").get<int>();
        spec.cfg.encoder_layers = j.at("encoder_layers").get<int>();
        spec.cfg.decoder_layers = j.at("decoder_layers").get<int>();
        spec.cfg.dropout = j.at("dropout").get<float>();
        spec.cfg.max_positions = j.at("max_positions").get<int>();
        spec.cfg.src_vocab = j.at("src_vocab").get<int>();
        spec.cfg.tgt_vocab = j.at("tgt_vocab").get<int>();
        spec.cfg.scale_embeddings = j.at("scale_embeddings").get<bool>();
        spec.cfg.tied_output = j.at("tied_output").get<bool>();
        spec.fusion.strategy = fusion_strategy_from_string(j.at("fusion").get<std::string>());
        spec.fusion.use = attr_use_from_string(j.at("attr_use").get<std::string>());
        spec.use_knowledge = j.at("use_knowledge").get<bool>();
        spec.n_aspects = j.at("n_aspects").get<int>();
        spec.n_categories = j.at("n_categories").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("model spec: ") + e.what());
    }
    return spec;
}

namespace {

void write_floats(std::ofstream& out, const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_floats(std::ifstream& in, std::vector<float>& v) {
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::string& dir, const KobeModel& m, const CheckpointMeta& meta, const Adam* opt) {
    fs::create_directories(dir);
    const auto params = m.params.all();

    ordered_json manifest;
    manifest["format"] = "kobe-checkpoint";
    manifest["version"] = 1;
    manifest["model"] = json::parse(model_spec_json(m.spec));
    manifest["seed"] = meta.seed;
    manifest["step"] = meta.step;
    manifest["epoch"] = meta.epoch;
    manifest["batch"] = meta.batch;
    manifest["src_vocab_hash"] = meta.src_vocab_hash;
    manifest["tgt_vocab_hash"] = meta.tgt_vocab_hash;

    uint64_t offset = 0;
    ordered_json plist = ordered_json::array();
    for (const Parameter* p : params) {
        ordered_json e;
        e["name"] = p->name;
        ordered_json shape = ordered_json::array();
        for (int r = 0; r < p->shape.rank; ++r) shape.push_back(p->shape.d[r]);
        e["shape"] = shape;
        e["offset"] = offset;
        e["bytes"] = p->numel() * sizeof(float);
        offset += p->numel() * sizeof(float);
        plist.push_back(std::move(e));
    }
    manifest["params"] = std::move(plist);
    manifest["optimizer"]["present"] = opt != nullptr;
    manifest["optimizer"]["t"] = opt ? opt->t() : 0;

    const std::string manifest_path = dir + "/manifest.json";
    {
        std::ofstream out(manifest_path);
        if (!out) throw IoError("cannot write checkpoint manifest " + manifest_path);
        out << manifest.dump(2) << "\n";
    }

    const std::string blob_path = dir + "/params.bin";
    std::ofstream out(blob_path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint blob " + blob_path);
    for (const Parameter* p : params) write_floats(out, p->value);
    if (opt) {
        for (const auto& buf : opt->m_buffers()) write_floats(out, buf);
        for (const auto& buf : opt->v_buffers()) write_floats(out, buf);
    }
    if (!out) throw IoError("short write on checkpoint blob " + blob_path);
}

Checkpoint load_checkpoint(const std::string& dir) {
    const std::string manifest_path = dir + "/manifest.json";
    std::ifstream min(manifest_path);
    if (!min) throw IoError("cannot open checkpoint manifest " + manifest_path);
    json manifest;
    try {
        manifest = json::parse(min);
    } catch (const json::exception& e) {
        throw ParseError(manifest_path + ": " + e.what());
    }

    Checkpoint ck;
    try {
        if (manifest.at("format").get<std::string>() != "kobe-checkpoint")
            throw ParseError(manifest_path + ": not a checkpoint manifest");
        if (manifest.at("version").get<int>() != 1)
            throw ParseError(manifest_path + ": unsupported checkpoint version");
        const ModelSpec spec = model_spec_from_json(manifest.at("model").dump());
        // Seed is irrelevant here: every value is about to be overwritten.
        ck.model = build_model(spec, 0);
        ck.meta.seed = manifest.at("seed").get<uint64_t>();
        ck.meta.step = manifest.at("step").get<int64_t>();
        ck.meta.epoch = manifest.at("epoch").get<int>();
        ck.meta.batch = manifest.at("batch").get<int>();
        ck.meta.src_vocab_hash = manifest.at("src_vocab_hash").get<uint64_t>();
        ck.meta.tgt_vocab_hash = manifest.at("tgt_vocab_hash").get<uint64_t>();
        ck.has_optimizer = manifest.at("optimizer").at("present").get<bool>();
        ck.adam_t = manifest.at("optimizer").at("t").get<int64_t>();

        const auto params = ck.model.params.all();
        const auto& plist = manifest.at("params");
        if (plist.size() != params.size())
            throw ParseError(manifest_path + ": manifest lists " + std::to_string(plist.size()) +
                             " parameters, model has " + std::to_string(params.size()));
        uint64_t offset = 0;
        for (size_t i = 0; i < params.size(); ++i) {
            const auto& e = plist.at(i);
            const Parameter* p = params[i];
            if (e.at("name").get<std::string>() != p->name)
                throw ParseError(manifest_path + ": parameter " + std::to_string(i) + " is '" +
                                 e.at("name").get<std::string>() + "', expected '" + p->name + "'");
            const auto shape = e.at("shape").get<std::vector<int>>();
            bool shape_ok = static_cast<int>(shape.size()) == p->shape.rank;
            for (int d = 0; shape_ok && d < p->shape.rank; ++d) shape_ok = shape[d] == p->shape.d[d];
            if (!shape_ok) throw ParseError(manifest_path + ": shape mismatch for '" + p->name + "'");
            if (e.at("offset").get<uint64_t>() != offset ||
                e.at("bytes").get<uint64_t>() != p->numel() * sizeof(float))
                throw ParseError(manifest_path + ": offsets do not tile the blob at '" + p->name + "'");
            offset += p->numel() * sizeof(float);
        }

        const std::string blob_path = dir + "/params.bin";
        const uint64_t expect = offset * (ck.has_optimizer ? 3 : 1);
        std::error_code ec;
        const uint64_t actual = fs::file_size(blob_path, ec);
        if (ec) throw IoError("cannot open checkpoint blob " + blob_path);
        if (actual != expect)
            throw ParseError(blob_path + ": size " + std::to_string(actual) + " does not match manifest (expected " +
                             std::to_string(expect) + ")");

        std::ifstream in(blob_path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint blob " + blob_path);
        for (Parameter* p : ck.model.params.all()) read_floats(in, p->value);
        if (ck.has_optimizer) {
            for (const Parameter* p : params) {
                ck.adam_m.emplace_back(p->numel());
                read_floats(in, ck.adam_m.back());
            }
            for (const Parameter* p : params) {
                ck.adam_v.emplace_back(p->numel());
                read_floats(in, ck.adam_v.back());
            }
        }
        if (!in) throw IoError("short read on checkpoint blob " + blob_path);
    } catch (const json::exception& e) {
        throw ParseError(manifest_path + ": " + e.what());
    }
    return ck;
}

}  // namespace kobe
