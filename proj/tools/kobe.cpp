// Command-line front end: one binary, subcommand per pipeline stage.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kobe/config.hpp"
#include "kobe/decode.hpp"
#include "kobe/metrics.hpp"
#include "kobe/train.hpp"

namespace fs = std::filesystem;
using namespace kobe;

namespace {

// ---------------------------------------------------------------------------
// Small shared plumbing

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// Registers every file a command writes; on failure (guard not disarmed) the
// partial outputs are removed. Checkpoints and training telemetry are
// written by the training loop itself and deliberately not registered — a
// failed run keeps its last good checkpoint.
class OutputGuard {
  public:
    explicit OutputGuard(const std::string& dir) : dir_(dir) { fs::create_directories(dir_); }
    ~OutputGuard() {
        if (disarmed_) return;
        for (const fs::path& p : files_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
    OutputGuard(const OutputGuard&) = delete;
    OutputGuard& operator=(const OutputGuard&) = delete;

    std::string file(const std::string& name) {
        const fs::path p = dir_ / name;
        fs::create_directories(p.parent_path());
        files_.push_back(p);
        return p.string();
    }
    const std::string& dir() const { return dirs_; }
    void disarm() { disarmed_ = true; }

  private:
    fs::path dir_;
    std::string dirs_{dir_.string()};
    std::vector<fs::path> files_;
    bool disarmed_ = false;
};

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    for (const std::string& line : lines) out << line << "\n";
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

ConfigFile load_config(const std::string& path) {
    return path.empty() ? ConfigFile{} : ConfigFile::load(path);
}

// flags > file > defaults: a flag that was actually given wins.
uint64_t effective_seed(const CLI::App* cmd, uint64_t flag_value, const ConfigFile& cfg) {
    if (cmd->count("--seed")) return flag_value;
    return static_cast<uint64_t>(cfg.get_int("seed", 1));
}

// ---------------------------------------------------------------------------
// synth

int run_synth(const CLI::App* cmd, const std::string& out_dir, const std::string& config_path,
              uint64_t seed_flag, int products_flag, int per_product_flag, int feedback_flag) {
    Timer timer;
    const ConfigFile cfg = load_config(config_path);
    cfg.require_known({"seed", "products", "per_product", "feedback"});
    const uint64_t seed = effective_seed(cmd, seed_flag, cfg);

    GenConfig gc = GenConfig::defaults();
    gc.n_products = cmd->count("--products") ? products_flag : cfg.get_int("products", gc.n_products);
    gc.instances_per_product =
        cmd->count("--per-product") ? per_product_flag : cfg.get_int("per_product", gc.instances_per_product);
    gc.feedback_items = cmd->count("--feedback") ? feedback_flag : cfg.get_int("feedback", gc.feedback_items);

    const SynthOutput so = synth_generate(gc, seed);

    OutputGuard out(out_dir);
    save_jsonl(out.file("corpus.jsonl"), so.corpus);
    write_text(out.file("kb.tsv"), so.kb_tsv);
    save_schema(out.file("schema.json"), so.schema);
    save_jsonl(out.file("feedback.jsonl"), so.feedback);
    // Flat adjective pool for lexicon construction, plus one in-corpus seed
    // word per aspect (the lexicon builder needs seeds the embeddings know).
    std::vector<std::string> adjectives, aspect_words;
    for (const auto& bank : so.aspect_lexicons) {
        adjectives.insert(adjectives.end(), bank.begin(), bank.end());
        aspect_words.push_back(bank.front());
    }
    write_lines(out.file("adjectives.txt"), adjectives);
    write_lines(out.file("aspect-words.txt"), aspect_words);

    RunManifest man;
    man.command = "synth";
    man.seed = seed;
    man.config["products"] = gc.n_products;
    man.config["per_product"] = gc.instances_per_product;
    man.config["feedback"] = gc.feedback_items;
    man.config["threads"] = max_threads();
    man.outputs = {"corpus.jsonl", "kb.tsv",         "schema.json",
                   "feedback.jsonl", "adjectives.txt", "aspect-words.txt"};
    man.version = version_string();
    man.wall_seconds = timer.seconds();
    write_manifest(out.dir(), man);
    out.file("run-manifest.json");  // registered after the fact so failure paths clean it too
    out.disarm();

    std::cout << "synth: " << so.corpus.size() << " instances, " << so.feedback.size()
              << " feedback items -> " << out.dir() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// annotate

int run_annotate(const CLI::App* cmd, const std::string& in_path, const std::string& feedback_path,
                 const std::string& adjectives_path, const std::string& aspect_words_path,
                 const std::string& schema_path, const std::string& out_dir,
                 const std::string& config_path, uint64_t seed_flag, double gamma_flag) {
    Timer timer;
    const ConfigFile cfg = load_config(config_path);
    cfg.require_known({"seed", "gamma", "embed_dim", "window", "negatives", "sgns_epochs", "sgns_lr",
                       "prune_min", "cnn_dim", "cnn_filters", "cnn_epochs", "cnn_batch", "cnn_lr",
                       "cnn_dropout"});
    const uint64_t seed = effective_seed(cmd, seed_flag, cfg);
    const float gamma = cmd->count("--gamma") ? static_cast<float>(gamma_flag)
                                              : static_cast<float>(cfg.get_double("gamma", 0.8));

    std::vector<Instance> corpus = load_jsonl(in_path);
    const std::vector<Instance> feedback = load_jsonl(feedback_path);
    const AttributeSchema schema = load_schema(schema_path);
    std::vector<std::string> adjectives;
    for (const std::string& line : read_lines(adjectives_path)) {
        const auto toks = tokenize(line);
        adjectives.insert(adjectives.end(), toks.begin(), toks.end());
    }
    std::vector<std::string> aspect_words;
    for (const std::string& line : read_lines(aspect_words_path)) {
        const auto toks = tokenize(line);
        aspect_words.insert(aspect_words.end(), toks.begin(), toks.end());
    }
    if (corpus.empty()) throw ContractError("corpus '" + in_path + "' is empty");
    if (static_cast<int>(aspect_words.size()) != schema.n_aspects())
        throw ContractError("aspect-words file lists " + std::to_string(aspect_words.size()) +
                            " seeds for " + std::to_string(schema.n_aspects()) + " aspects");

    // Step 1: embeddings from the description corpus.
    SgnsConfig sg;
    sg.dim = cfg.get_int("embed_dim", sg.dim);
    sg.window = cfg.get_int("window", sg.window);
    sg.negatives = cfg.get_int("negatives", sg.negatives);
    sg.epochs = cfg.get_int("sgns_epochs", sg.epochs);
    sg.lr = static_cast<float>(cfg.get_double("sgns_lr", sg.lr));
    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(corpus.size());
    for (const Instance& inst : corpus) sentences.push_back(inst.y);
    const WordEmbeddings emb = sgns_train(sentences, sg, seed);

    // Lexicons from the adjective list, then aspect labels.
    const AspectLexicons lex = aspect_lexicon(adjectives, aspect_words, emb, gamma);
    for (Instance& inst : corpus) inst.a1 = label_aspect(inst.y, lex, emb);

    // User categories: classifier trained on the feedback analogue of Z.
    CnnConfig cc;
    cc.dim = cfg.get_int("cnn_dim", cc.dim);
    cc.filters = cfg.get_int("cnn_filters", cc.filters);
    cc.epochs = cfg.get_int("cnn_epochs", cc.epochs);
    cc.batch_size = cfg.get_int("cnn_batch", cc.batch_size);
    cc.lr = static_cast<float>(cfg.get_double("cnn_lr", cc.lr));
    cc.dropout = static_cast<float>(cfg.get_double("cnn_dropout", cc.dropout));
    cc.seed = seed;
    std::vector<std::vector<std::string>> texts;
    std::vector<int> labels;
    for (const Instance& f : feedback) {
        texts.push_back(f.y);
        labels.push_back(f.a2);
    }
    std::vector<CnnEpoch> history;
    const ClassifierM clf = cnn_train(texts, labels, schema.n_categories(), cc, &history);
    label_user_category(corpus, clf);
    const int prune_min = cfg.get_int("prune_min", 5);
    const int remapped = prune_rare_categories(corpus, prune_min);

    OutputGuard out(out_dir);
    save_jsonl(out.file("annotated.jsonl"), corpus);

    nlohmann::ordered_json report;
    report["embeddings"] = {{"dim", emb.dim}, {"vocab", emb.n_words()}};
    std::vector<int> per_aspect(lex.n_aspects(), 0);
    for (const auto& [word, aspect] : lex.assignment) {
        (void)word;
        ++per_aspect[aspect];
    }
    report["lexicon"] = {{"assigned", per_aspect},
                         {"discarded", lex.discarded.size()},
                         {"skipped", lex.skipped}};
    report["classifier"] = {{"epochs", history.size()},
                            {"final_loss", history.empty() ? 0.0 : history.back().loss},
                            {"final_accuracy", history.empty() ? 0.0 : history.back().accuracy}};
    report["pruned_to_unknown"] = remapped;
    write_text(out.file("annotate-report.json"), report.dump(2) + "\n");

    RunManifest man;
    man.command = "annotate";
    man.seed = seed;
    man.config["gamma"] = gamma;
    man.config["embed_dim"] = sg.dim;
    man.config["sgns_epochs"] = sg.epochs;
    man.config["cnn_epochs"] = cc.epochs;
    man.config["prune_min"] = prune_min;
    man.config["threads"] = max_threads();
    man.inputs = {in_path, feedback_path, adjectives_path, aspect_words_path, schema_path};
    man.outputs = {"annotated.jsonl", "annotate-report.json"};
    man.version = version_string();
    man.wall_seconds = timer.seconds();
    write_manifest(out.dir(), man);
    out.file("run-manifest.json");
    out.disarm();

    std::cout << "annotate: " << corpus.size() << " instances labeled, " << remapped
              << " categories pruned to unknown -> " << out.dir() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

FusionStrategy strategy_from_cli(const std::string& s) {
    if (s == "baseline") return FusionStrategy::None;
    if (s == "attr-d") return FusionStrategy::Dedicated;
    if (s == "attr-s") return FusionStrategy::SourceToken;
    if (s == "attr-t") return FusionStrategy::TargetStart;
    if (s == "attr-a") return FusionStrategy::Add;
    throw ConfigError("unknown strategy '" + s + "'");
}

struct TrainKnobs {
    ModelConfig model;  // vocab sizes filled after preprocessing
    TrainConfig train;
    int min_freq = 5, max_title = 100, max_desc = 150;
};

const std::vector<std::string> kTrainKeys = {
    "seed",      "d_model",   "d_ff",        "heads",          "enc_layers",       "dec_layers",
    "dropout",   "max_positions", "min_freq", "max_title",     "max_desc",         "batch",
    "epochs",    "max_steps", "lr",          "log_every",      "validate_every",   "checkpoint_every"};

TrainKnobs read_train_knobs(const ConfigFile& cfg, uint64_t seed) {
    TrainKnobs k;
    k.model.d_model = cfg.get_int("d_model", 64);
    k.model.d_ff = cfg.get_int("d_ff", 256);
    k.model.heads = cfg.get_int("heads", 4);
    k.model.encoder_layers = cfg.get_int("enc_layers", 2);
    k.model.decoder_layers = cfg.get_int("dec_layers", 2);
    k.model.dropout = static_cast<float>(cfg.get_double("dropout", 0.1));
    k.model.max_positions = cfg.get_int("max_positions", 512);
    k.min_freq = cfg.get_int("min_freq", 5);
    k.max_title = cfg.get_int("max_title", 100);
    k.max_desc = cfg.get_int("max_desc", 150);
    k.train.batch_size = cfg.get_int("batch", 64);
    k.train.epochs = cfg.get_int("epochs", 3);
    k.train.max_steps = cfg.get_int("max_steps", 0);
    k.train.dropout = k.model.dropout;
    k.train.adam.lr = static_cast<float>(cfg.get_double("lr", 1e-4));
    k.train.log_every = cfg.get_int("log_every", 50);
    k.train.validate_every = cfg.get_int("validate_every", 0);
    k.train.checkpoint_every = cfg.get_int("checkpoint_every", 0);
    k.train.seed = seed;
    return k;
}

nlohmann::ordered_json knobs_json(const TrainKnobs& k, const FusionSpec& fusion, bool knowledge) {
    nlohmann::ordered_json j;
    j["strategy"] = to_string(fusion.strategy);
    j["attrs"] = to_string(fusion.use);
    j["knowledge"] = knowledge;
    j["d_model"] = k.model.d_model;
    j["d_ff"] = k.model.d_ff;
    j["heads"] = k.model.heads;
    j["enc_layers"] = k.model.encoder_layers;
    j["dec_layers"] = k.model.decoder_layers;
    j["dropout"] = k.model.dropout;
    j["min_freq"] = k.min_freq;
    j["batch"] = k.train.batch_size;
    j["epochs"] = k.train.epochs;
    j["max_steps"] = k.train.max_steps;
    j["lr"] = k.train.adam.lr;
    j["threads"] = max_threads();
    return j;
}

// Shared by train and ablate: fit one model on pre-encoded splits and leave
// checkpoint + telemetry under dir. Returns the result row.
TrainResult fit_model(KobeModel& model, const std::vector<EncodedInstance>& train_set,
                      const std::vector<EncodedInstance>& valid_set, const TrainKnobs& knobs,
                      const std::string& dir) {
    fs::create_directories(dir);
    Adam opt(model.params, knobs.train.adam);
    const TrainResult res = train_model(model, opt, train_set, valid_set, knobs.train, dir);
    if (res.diverged) throw NumericError("training diverged: " + res.error);
    return res;
}

int run_train(const CLI::App* cmd, const std::string& in_path, const std::string& schema_path,
              const std::string& out_dir, const std::string& config_path, uint64_t seed_flag,
              const std::string& strategy_name, const std::string& attrs_name,
              const std::string& knowledge_name) {
    Timer timer;
    const ConfigFile cfg = load_config(config_path);
    cfg.require_known(kTrainKeys);
    const uint64_t seed = effective_seed(cmd, seed_flag, cfg);
    TrainKnobs knobs = read_train_knobs(cfg, seed);

    FusionSpec fusion;
    fusion.strategy = strategy_from_cli(strategy_name);
    fusion.use = attr_use_from_string(attrs_name);
    const bool knowledge = knowledge_name == "on";

    const std::vector<Instance> corpus = load_jsonl(in_path);
    AttributeSchema schema;
    if (!schema_path.empty()) schema = load_schema(schema_path);
    if (fusion.strategy != FusionStrategy::None && schema.n_aspects() == 0)
        throw ConfigError("--strategy " + strategy_name + " needs --schema");

    const std::vector<std::string> extra_reserved =
        fusion.strategy == FusionStrategy::SourceToken
            ? attribute_source_tokens(schema.n_aspects(), schema.n_categories())
            : std::vector<std::string>{};
    PreprocessResult pre =
        preprocess(corpus, SplitRatios{}, seed, knobs.min_freq, extra_reserved, knobs.max_title,
                   knobs.max_desc);
    knobs.model.src_vocab = pre.src_vocab.size();
    knobs.model.tgt_vocab = pre.tgt_vocab.size();
    knobs.train.src_vocab_hash = vocab_hash(pre.src_vocab);
    knobs.train.tgt_vocab_hash = vocab_hash(pre.tgt_vocab);

    OutputGuard out(out_dir);
    save_vocab(out.file("src.vocab"), pre.src_vocab);
    save_vocab(out.file("tgt.vocab"), pre.tgt_vocab);
    save_jsonl(out.file("train.jsonl"), pre.train);
    save_jsonl(out.file("valid.jsonl"), pre.valid);
    save_jsonl(out.file("test.jsonl"), pre.test);

    ModelSpec spec;
    spec.cfg = knobs.model;
    spec.fusion = fusion;
    spec.use_knowledge = knowledge;
    spec.n_aspects = schema.n_aspects();
    spec.n_categories = schema.n_categories();

    std::ostringstream summary;
    if (fusion.strategy == FusionStrategy::Dedicated) {
        // One baseline per aspect subset; shared vocabularies.
        std::map<int, std::vector<Instance>> train_parts = split_by_aspect(pre.train);
        std::map<int, std::vector<Instance>> valid_parts = split_by_aspect(pre.valid);
        if (train_parts.count(-1))
            throw ContractError("dedicated training needs aspect annotations on every instance");
        for (auto& [aspect, subset] : train_parts) {
            ModelSpec sub = spec;
            sub.fusion.strategy = FusionStrategy::None;  // each submodel is a plain baseline
            KobeModel model = build_model(sub, seed);
            const auto valid_it = valid_parts.find(aspect);
            const TrainResult res = fit_model(
                model, encode_dataset(subset, pre.src_vocab, pre.tgt_vocab),
                valid_it == valid_parts.end()
                    ? std::vector<EncodedInstance>{}
                    : encode_dataset(valid_it->second, pre.src_vocab, pre.tgt_vocab),
                knobs, (fs::path(out.dir()) / ("aspect-" + std::to_string(aspect))).string());
            summary << "aspect " << aspect << ": " << subset.size() << " instances, "
                    << res.steps << " steps, train loss " << res.train_loss << "\n";
        }
    } else {
        KobeModel model = build_model(spec, seed);
        const TrainResult res =
            fit_model(model, encode_dataset(pre.train, pre.src_vocab, pre.tgt_vocab),
                      encode_dataset(pre.valid, pre.src_vocab, pre.tgt_vocab), knobs, out.dir());
        summary << res.steps << " steps, train loss " << res.train_loss << ", valid loss "
                << res.valid_loss << "\n";
    }

    RunManifest man;
    man.command = "train";
    man.seed = seed;
    man.config = knobs_json(knobs, fusion, knowledge);
    man.inputs = {in_path};
    if (!schema_path.empty()) man.inputs.push_back(schema_path);
    man.outputs = {"checkpoint", "src.vocab", "tgt.vocab", "train.jsonl", "valid.jsonl", "test.jsonl",
                   "metrics.jsonl"};
    man.version = version_string();
    man.wall_seconds = timer.seconds();
    write_manifest(out.dir(), man);
    out.file("run-manifest.json");
    out.disarm();

    std::cout << "train: " << summary.str() << "  -> " << out.dir() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// generate

std::string decode_one(const KobeModel& model, const EncodedInstance& inst, const Vocab& tgt,
                       bool greedy, const BeamConfig& bc) {
    const std::vector<int> ids = greedy ? greedy_decode(model, inst, bc.max_len) : beam_search(model, inst, bc);
    return join_tokens(tgt.decode(ids));
}

int run_generate(const std::string& model_dir, const std::string& in_flag, const std::string& out_dir,
                 int beam, int max_len, const std::string& length_norm, bool greedy) {
    Timer timer;
    const Vocab src = load_vocab((fs::path(model_dir) / "src.vocab").string());
    const Vocab tgt = load_vocab((fs::path(model_dir) / "tgt.vocab").string());
    const std::string in_path =
        in_flag.empty() ? (fs::path(model_dir) / "test.jsonl").string() : in_flag;
    const std::vector<Instance> instances = load_jsonl(in_path);
    if (instances.empty()) throw ContractError("nothing to decode in '" + in_path + "'");
    const std::vector<EncodedInstance> encoded = encode_dataset(instances, src, tgt);

    BeamConfig bc;
    bc.beam = beam;
    bc.max_len = max_len;
    bc.length_norm = length_norm == "on";

    std::vector<std::string> generated, references;
    if (fs::exists(fs::path(model_dir) / "checkpoint")) {
        const Checkpoint ck = load_checkpoint((fs::path(model_dir) / "checkpoint").string());
        for (size_t i = 0; i < encoded.size(); ++i) {
            generated.push_back(decode_one(ck.model, encoded[i], tgt, greedy, bc));
            references.push_back(join_tokens(instances[i].y));
        }
    } else {
        // Dedicated layout: aspect-k subdirectories, routed by each
        // instance's aspect annotation.
        std::map<int, Checkpoint> models;
        for (const auto& entry : fs::directory_iterator(model_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("aspect-", 0) == 0)
                models.emplace(std::stoi(name.substr(7)),
                               load_checkpoint((entry.path() / "checkpoint").string()));
        }
        if (models.empty()) throw IoError("no checkpoint under '" + model_dir + "'");
        for (size_t i = 0; i < encoded.size(); ++i) {
            const auto it = models.find(encoded[i].a1);
            if (it == models.end())
                throw ContractError("no dedicated model for aspect " + std::to_string(encoded[i].a1));
            generated.push_back(decode_one(it->second.model, encoded[i], tgt, greedy, bc));
            references.push_back(join_tokens(instances[i].y));
        }
    }

    OutputGuard out(out_dir);
    write_lines(out.file("generated.txt"), generated);
    write_lines(out.file("references.txt"), references);

    RunManifest man;
    man.command = "generate";
    man.config["beam"] = bc.beam;
    man.config["max_len"] = bc.max_len;
    man.config["length_norm"] = bc.length_norm;
    man.config["greedy"] = greedy;
    man.config["threads"] = max_threads();
    man.inputs = {model_dir, in_path};
    man.outputs = {"generated.txt", "references.txt"};
    man.version = version_string();
    man.wall_seconds = timer.seconds();
    write_manifest(out.dir(), man);
    out.file("run-manifest.json");
    out.disarm();

    std::cout << "generate: " << generated.size() << " descriptions -> " << out.dir() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

TokenCorpus tokenize_lines(const std::vector<std::string>& lines) {
    TokenCorpus corpus;
    corpus.reserve(lines.size());
    for (const std::string& line : lines) corpus.push_back(tokenize(line));
    return corpus;
}

int run_evaluate(const std::string& candidates_path, const std::string& references_path,
                 const std::string& out_dir, bool smoothing) {
    Timer timer;
    const TokenCorpus candidates = tokenize_lines(read_lines(candidates_path));
    const TokenCorpus references = tokenize_lines(read_lines(references_path));
    const EvalReport report = evaluate_corpus(candidates, references, smoothing);
    std::cout << report_table(report);

    if (!out_dir.empty()) {
        OutputGuard out(out_dir);
        write_text(out.file("report.json"), report_json(report).dump(2) + "\n");
        RunManifest man;
        man.command = "evaluate";
        man.config["smoothing"] = smoothing;
        man.inputs = {candidates_path, references_path};
        man.outputs = {"report.json"};
        man.version = version_string();
        man.wall_seconds = timer.seconds();
        write_manifest(out.dir(), man);
        out.file("run-manifest.json");
        out.disarm();
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

int run_gradcheck(uint64_t seed, double eps, int d_model) {
    // Full model with every component on, so the sweep covers encoder,
    // knowledge path, bi-attention, fusion tables, and decoder at once.
    ModelSpec spec;
    spec.cfg.d_model = d_model;
    spec.cfg.d_ff = 2 * d_model;
    spec.cfg.heads = 2;
    spec.cfg.encoder_layers = 1;
    spec.cfg.decoder_layers = 1;
    spec.cfg.src_vocab = 16;
    spec.cfg.tgt_vocab = 14;
    spec.cfg.max_positions = 32;
    spec.cfg.dropout = 0.0f;
    spec.fusion.strategy = FusionStrategy::Add;
    spec.fusion.use = AttrUse::Both;
    spec.use_knowledge = true;
    spec.n_aspects = 2;
    spec.n_categories = 3;
    KobeModel model = build_model(spec, seed);

    Rng rng(seed);
    std::vector<int> x, w, y;
    for (int i = 0; i < 3; ++i) x.push_back(5 + static_cast<int>(rng.below(11)));
    for (int i = 0; i < 4; ++i) w.push_back(5 + static_cast<int>(rng.below(11)));
    for (int i = 0; i < 3; ++i) y.push_back(5 + static_cast<int>(rng.below(9)));
    const AttributePair a{0, 1};

    const std::vector<Parameter*> params = model.params.all();
    const GradCheckReport rep = finite_diff_check(
        [&](Tape& t) {
            const int logits = kobe_forward(t, model, x, w, a, y);
            return nll_loss(t, logits, teacher_targets(y));
        },
        params, static_cast<float>(eps));

    std::cout << "gradcheck: max relative error " << rep.max_rel_err << " at " << rep.worst_param
              << "[" << rep.worst_index << "] (analytic " << rep.analytic << ", numeric "
              << rep.numeric << ")\n";
    return rep.max_rel_err < 1e-3 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// ablate

int run_ablate(const CLI::App* cmd, const std::string& in_path, const std::string& schema_path,
               const std::string& out_dir, const std::string& config_path, uint64_t seed_flag) {
    Timer timer;
    ConfigFile cfg = load_config(config_path);
    std::vector<std::string> keys = kTrainKeys;
    keys.insert(keys.end(), {"beam", "max_len", "length_norm", "smoothing"});
    cfg.require_known(keys);
    const uint64_t seed = effective_seed(cmd, seed_flag, cfg);
    TrainKnobs knobs = read_train_knobs(cfg, seed);

    BeamConfig bc;
    bc.beam = cfg.get_int("beam", 10);
    bc.max_len = cfg.get_int("max_len", 150);
    bc.length_norm = cfg.get_bool("length_norm", true);
    const bool smoothing = cfg.get_bool("smoothing", false);

    const std::vector<Instance> corpus = load_jsonl(in_path);
    const AttributeSchema schema = load_schema(schema_path);

    PreprocessResult pre =
        preprocess(corpus, SplitRatios{}, seed, knobs.min_freq, {}, knobs.max_title, knobs.max_desc);
    knobs.model.src_vocab = pre.src_vocab.size();
    knobs.model.tgt_vocab = pre.tgt_vocab.size();
    knobs.train.src_vocab_hash = vocab_hash(pre.src_vocab);
    knobs.train.tgt_vocab_hash = vocab_hash(pre.tgt_vocab);
    const auto enc_train = encode_dataset(pre.train, pre.src_vocab, pre.tgt_vocab);
    const auto enc_valid = encode_dataset(pre.valid, pre.src_vocab, pre.tgt_vocab);
    const auto enc_test = encode_dataset(pre.test, pre.src_vocab, pre.tgt_vocab);
    TokenCorpus references;
    for (const Instance& inst : pre.test) references.push_back(inst.y);

    struct Row {
        std::string name;
        AttrUse use;
        bool knowledge;
    };
    const std::vector<Row> ladder = {
        {"full", AttrUse::Both, true},
        {"-knowledge", AttrUse::Both, false},
        {"-user", AttrUse::Aspect, true},
        {"-aspect", AttrUse::User, true},
    };

    OutputGuard out(out_dir);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    std::ostringstream table;
    table << std::left << std::setw(12) << "row" << std::right << std::setw(12) << "valid-loss"
          << std::setw(10) << "bleu" << std::setw(12) << "distinct-4" << "\n"
          << std::fixed << std::setprecision(4);
    for (const Row& row : ladder) {
        ModelSpec spec;
        spec.cfg = knobs.model;
        spec.fusion.strategy = FusionStrategy::Add;
        spec.fusion.use = row.use;
        spec.use_knowledge = row.knowledge;
        spec.n_aspects = schema.n_aspects();
        spec.n_categories = schema.n_categories();
        KobeModel model = build_model(spec, seed);
        const std::string row_dir = (fs::path(out.dir()) / ("row" + row.name)).string();
        const TrainResult res = fit_model(model, enc_train, enc_valid, knobs, row_dir);

        TokenCorpus generated;
        for (const EncodedInstance& inst : enc_test)
            generated.push_back(tokenize(decode_one(model, inst, pre.tgt_vocab, false, bc)));
        const EvalReport rep = evaluate_corpus(generated, references, smoothing);

        nlohmann::ordered_json r;
        r["row"] = row.name;
        r["attrs"] = to_string(row.use);
        r["knowledge"] = row.knowledge;
        r["valid_loss"] = res.valid_loss;
        r["bleu"] = rep.bleu;
        r["distinct_3"] = rep.distinct.at(3);
        r["distinct_4"] = rep.distinct.at(4);
        r["distinct_5"] = rep.distinct.at(5);
        rows.push_back(std::move(r));
        table << std::left << std::setw(12) << row.name << std::right << std::setw(12)
              << res.valid_loss << std::setw(10) << rep.bleu << std::setw(12) << rep.distinct.at(4)
              << "\n";
    }

    nlohmann::ordered_json report;
    report["rows"] = std::move(rows);
    write_text(out.file("ablation.json"), report.dump(2) + "\n");
    std::cout << table.str();

    RunManifest man;
    man.command = "ablate";
    man.seed = seed;
    man.config = knobs_json(knobs, FusionSpec{FusionStrategy::Add, AttrUse::Both}, true);
    man.config["beam"] = bc.beam;
    man.config["max_len"] = bc.max_len;
    man.inputs = {in_path, schema_path};
    man.outputs = {"ablation.json"};
    man.version = version_string();
    man.wall_seconds = timer.seconds();
    write_manifest(out.dir(), man);
    out.file("run-manifest.json");
    out.disarm();
    return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"kobe: knowledge-based personalized product description generation"};
    app.require_subcommand(1);
    app.footer("Environment: KOBE_THREADS caps the worker count (all stages currently run 1 worker).");

    int rc = 0;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus, knowledge base, and feedback");
    std::string synth_out, synth_cfg;
    uint64_t synth_seed = 1;
    int synth_products = 500, synth_per = 4, synth_feedback = 0;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--config", synth_cfg, "Key-value config file");
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--products", synth_products, "Number of products");
    synth->add_option("--per-product", synth_per, "Instances per product");
    synth->add_option("--feedback", synth_feedback, "Feedback items (0: one per product)");
    synth->callback([&] {
        rc = run_synth(synth, synth_out, synth_cfg, synth_seed, synth_products, synth_per,
                       synth_feedback);
    });

    // annotate
    auto* annotate = app.add_subcommand("annotate", "Label aspects and user categories on a corpus");
    std::string ann_in, ann_feedback, ann_adjectives, ann_words, ann_schema, ann_out, ann_cfg;
    uint64_t ann_seed = 1;
    double ann_gamma = 0.8;
    annotate->add_option("--in", ann_in, "Corpus JSONL")->required();
    annotate->add_option("--feedback", ann_feedback, "Labeled feedback JSONL")->required();
    annotate->add_option("--adjectives", ann_adjectives, "Candidate adjective list, one per line")
        ->required();
    annotate->add_option("--aspect-words", ann_words, "One in-corpus seed word per aspect")
        ->required();
    annotate->add_option("--schema", ann_schema, "Attribute schema JSON")->required();
    annotate->add_option("--out", ann_out, "Output directory")->required();
    annotate->add_option("--config", ann_cfg, "Key-value config file");
    annotate->add_option("--seed", ann_seed, "Annotation seed");
    annotate->add_option("--gamma", ann_gamma, "Lexicon dominance threshold");
    annotate->callback([&] {
        rc = run_annotate(annotate, ann_in, ann_feedback, ann_adjectives, ann_words, ann_schema,
                          ann_out, ann_cfg, ann_seed, ann_gamma);
    });

    // train
    auto* train = app.add_subcommand("train", "Fit a model on an annotated corpus");
    std::string tr_in, tr_schema, tr_out, tr_cfg, tr_strategy = "baseline", tr_attrs = "both",
                tr_knowledge = "on";
    uint64_t tr_seed = 1;
    train->add_option("--in", tr_in, "Annotated corpus JSONL")->required();
    train->add_option("--schema", tr_schema, "Attribute schema JSON");
    train->add_option("--out", tr_out, "Output directory")->required();
    train->add_option("--config", tr_cfg, "Key-value config file");
    train->add_option("--seed", tr_seed, "Training seed");
    train->add_option("--strategy", tr_strategy, "Attribute fusion strategy")
        ->check(CLI::IsMember({"baseline", "attr-d", "attr-s", "attr-t", "attr-a"}));
    train->add_option("--attrs", tr_attrs, "Which attributes to fuse")
        ->check(CLI::IsMember({"aspect", "user", "both"}));
    train->add_option("--knowledge", tr_knowledge, "Bi-attention knowledge incorporation")
        ->check(CLI::IsMember({"on", "off"}));
    train->callback([&] {
        rc = run_train(train, tr_in, tr_schema, tr_out, tr_cfg, tr_seed, tr_strategy, tr_attrs,
                       tr_knowledge);
    });

    // generate
    auto* generate = app.add_subcommand("generate", "Decode descriptions with a trained model");
    std::string gen_model, gen_in, gen_out, gen_norm = "on";
    int gen_beam = 10, gen_max_len = 150;
    bool gen_greedy = false;
    generate->add_option("--model", gen_model, "Training output directory")->required();
    generate->add_option("--in", gen_in, "Instances to decode (default: model's test split)");
    generate->add_option("--out", gen_out, "Output directory")->required();
    generate->add_option("--beam", gen_beam, "Beam width");
    generate->add_option("--max-len", gen_max_len, "Maximum decoded length");
    generate->add_option("--length-norm", gen_norm, "Length normalization")
        ->check(CLI::IsMember({"on", "off"}));
    generate->add_flag("--greedy", gen_greedy, "Greedy decoding instead of beam search");
    generate->callback(
        [&] { rc = run_generate(gen_model, gen_in, gen_out, gen_beam, gen_max_len, gen_norm, gen_greedy); });

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score generated descriptions against references");
    std::string ev_cands, ev_refs, ev_out;
    bool ev_smooth = false;
    evaluate->add_option("--candidates", ev_cands, "Generated text, one per line")->required();
    evaluate->add_option("--references", ev_refs, "Reference text, one per line")->required();
    evaluate->add_option("--out", ev_out, "Report directory (optional)");
    evaluate->add_flag("--smoothing", ev_smooth, "Add-one smoothing on 2..4-gram precisions");
    evaluate->callback([&] { rc = run_evaluate(ev_cands, ev_refs, ev_out, ev_smooth); });

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
    uint64_t gc_seed = 61;
    double gc_eps = 5e-4;
    int gc_d_model = 8;
    gradcheck->add_option("--seed", gc_seed, "Model/data seed");
    gradcheck->add_option("--eps", gc_eps, "Finite-difference step");
    gradcheck->add_option("--d-model", gc_d_model, "Model width for the check");
    gradcheck->callback([&] { rc = run_gradcheck(gc_seed, gc_eps, gc_d_model); });

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Train and compare the four-row component ladder");
    std::string ab_in, ab_schema, ab_out, ab_cfg;
    uint64_t ab_seed = 1;
    ablate->add_option("--in", ab_in, "Annotated corpus JSONL")->required();
    ablate->add_option("--schema", ab_schema, "Attribute schema JSON")->required();
    ablate->add_option("--out", ab_out, "Output directory")->required();
    ablate->add_option("--config", ab_cfg, "Key-value config file");
    ablate->add_option("--seed", ab_seed, "Training seed");
    ablate->callback([&] { rc = run_ablate(ablate, ab_in, ab_schema, ab_out, ab_cfg, ab_seed); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version exit 0; any usage problem exits 2
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
