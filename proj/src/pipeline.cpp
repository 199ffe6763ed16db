#include "gounsafe/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gounsafe/cfg.hpp"
#include "gounsafe/encoder.hpp"
#include "gounsafe/parser.hpp"
#include "gounsafe/usages.hpp"

namespace gounsafe {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out.flush()) throw IoError("cannot write " + path);
}

std::vector<double> row_of(const Tensor& t) {
    std::vector<double> out(t.cols());
    for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(c);
    return out;
}

std::string label_string(const std::vector<std::string>& taxonomy, int index) {
    if (index >= 0 && index < static_cast<int>(taxonomy.size())) return taxonomy[index];
    return fmt::format("class-{}", index);
}

// Appends one JSON object per line; nlohmann orders keys alphabetically, so
// lines depend only on their values.
class LedgerWriter {
public:
    LedgerWriter(const std::string& path, bool append)
        : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
        if (!out_) throw IoError("cannot write " + path);
    }

    void write(const json& record) {
        out_ << record.dump() << "\n";
        if (!out_) throw IoError("cannot write " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

struct FileExtraction {
    std::vector<ExtractedUsage> usages;
    std::vector<std::string> errors;
    bool parsed = false;
};

FileExtraction extract_file(const std::string& abs_path, const std::string& rel_path,
                            const std::string& module_path) {
    FileExtraction out;
    SourceUnit unit;
    unit.path = rel_path;
    unit.module_path = module_path;
    try {
        unit.text = read_text_file(abs_path);
    } catch (const IoError& e) {
        out.errors.push_back(e.what());
        return out;
    }

    std::unique_ptr<AstNode> root;
    try {
        root = parse_source(unit);
    } catch (const ParseError& e) {
        out.errors.push_back(fmt::format("{}: {}", rel_path, e.what()));
        return out;
    }
    out.parsed = true;

    std::vector<UnsafeUsageSite> sites = find_unsafe_usages(*root, unit);
    std::vector<const AstNode*> context_order;
    std::map<const AstNode*, std::vector<UnsafeUsageSite>> grouped;
    for (const UnsafeUsageSite& site : sites) {
        if (site.context.node == nullptr) {
            out.errors.push_back(fmt::format("{}:{}:{}: usage outside a supported context, skipped",
                                             rel_path, site.span.line, site.span.col));
            continue;
        }
        auto [it, fresh] = grouped.try_emplace(site.context.node);
        if (fresh) context_order.push_back(site.context.node);
        it->second.push_back(site);
    }

    for (const AstNode* node : context_order) {
        const std::vector<UnsafeUsageSite>& group = grouped[node];
        EnrichedCfg graph;
        try {
            graph = label_vertices(build_cfg(group.front().context, group),
                                   group.front().context, *root, unit);
        } catch (const std::exception& e) {
            out.errors.push_back(fmt::format("{}:{}: cannot build graph: {}", rel_path,
                                             group.front().span.line, e.what()));
            continue;
        }
        graph.vertex_nodes.clear();
        graph.vertex_exprs.clear();
        for (const auto& [site, vertex] : graph.usage_vertices) {
            ExtractedUsage usage;
            usage.file = rel_path;
            usage.line = site.span.line;
            usage.col = site.span.col;
            usage.api_member = api_member_name(site.api_member);
            usage.context_kind = context_kind_name(site.context.kind);
            usage.graph = graph;
            usage.usage_vertex = vertex;
            out.usages.push_back(std::move(usage));
        }
    }
    return out;
}

std::string module_path_of(const fs::path& root) {
    std::ifstream in(root / "go.mod");
    if (!in) return "";
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("module ", 0) == 0) {
            std::string path = line.substr(7);
            while (!path.empty() && (path.back() == '\r' || path.back() == ' '))
                path.pop_back();
            return path;
        }
    }
    return "";
}

ModelConfig protocol_config(const ProtocolOptions& options, int input_dim, int what_classes,
                            int why_classes) {
    ModelConfig config = options.have_config ? options.config : ModelConfig{};
    if (!options.have_config) config.variant = options.variant;
    config.input_dim = input_dim;
    config.what_classes = what_classes;
    config.why_classes = why_classes;
    config.validate();
    return config;
}

json metrics_json(const MetricsRecord& m) {
    return json{{"top1-what", m.top1_what},
                {"top1-why", m.top1_why},
                {"top1-joint", m.top1_joint},
                {"top3-joint", m.top3_joint},
                {"conformal-acc-joint", m.conformal_acc_joint},
                {"mean-set-size-what", m.mean_set_size_what},
                {"mean-set-size-why", m.mean_set_size_why},
                {"fold", m.fold},
                {"repeat", m.repeat}};
}

json set_json(const PredictionSet& set, const std::vector<std::string>& taxonomy) {
    json out = json::array();
    for (std::size_t i = 0; i < set.labels.size(); ++i)
        out.push_back(json{{"label", label_string(taxonomy, set.labels[i])},
                           {"probability", set.probabilities[i]}});
    return out;
}

std::string set_text(const PredictionSet& set, const std::vector<std::string>& taxonomy) {
    std::string out = "{";
    for (std::size_t i = 0; i < set.labels.size(); ++i) {
        if (i > 0) out += " ";
        out += fmt::format("{}:{:.3f}", label_string(taxonomy, set.labels[i]),
                           set.probabilities[i]);
    }
    return out + "}";
}

struct LoadedCorpus {
    ExtractionResult extraction;
    std::vector<DatasetRecord> records;
    LabeledCorpus corpus;
    std::vector<std::pair<int, int>> labels;
};

LoadedCorpus load_corpus(const std::string& project, const std::string& dataset,
                         bool include_vendored, std::ostream& err) {
    LoadedCorpus out;
    out.records = read_dataset(dataset);
    validate_dataset(out.records);
    out.extraction = extract_project(project, include_vendored);
    for (const std::string& e : out.extraction.file_errors) err << "warning: " << e << "\n";
    out.corpus = join_dataset(out.extraction, out.records);
    for (const std::string& w : out.corpus.warnings) err << "warning: " << w << "\n";
    for (const AblationInstance& inst : out.corpus.instances)
        out.labels.emplace_back(inst.gold_what, inst.gold_why);
    return out;
}

std::string ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", dir, ec.message()));
    return dir;
}

json run_summary_json(const TrainRunSummary& run) {
    return json{{"stage", "train-run"},
                {"repeat", run.repeat},
                {"seed", hash_hex(run.seed)},
                {"epochs-run", run.epochs_run},
                {"best-epoch", run.best_epoch},
                {"val-loss", run.val_loss},
                {"val-accuracy", run.val_accuracy}};
}

json calibration_json(const CalibrationArtifact& a) {
    return json{{"stage", "calibration"},
                {"epsilon", a.epsilon},
                {"t-what", a.t_what},
                {"t-why", a.t_why},
                {"threshold-what", a.threshold_what},
                {"threshold-why", a.threshold_why},
                {"size", a.calibration_size}};
}

}  // namespace

const std::vector<std::string>& what_taxonomy() {
    static const std::vector<std::string> labels = {
        "cast-basic",      "cast-bytes",         "cast-function", "cast-header",
        "cast-pointer",    "cast-struct",        "definition",    "delegate",
        "memory-access",   "pointer-arithmetic", "syscall",       "unused",
    };
    return labels;
}

const std::vector<std::string>& why_taxonomy() {
    static const std::vector<std::string> labels = {
        "atomic",     "avoid-gc",      "efficiency",
        "ffi",        "generics",      "hide-escape-analysis",
        "memory-layout-control", "reflection", "serialization",
        "types",      "unused",
    };
    return labels;
}

namespace {

int index_in(const std::vector<std::string>& taxonomy, const std::string& label) {
    auto it = std::find(taxonomy.begin(), taxonomy.end(), label);
    return it == taxonomy.end() ? -1 : static_cast<int>(it - taxonomy.begin());
}

}  // namespace

int what_label_index(const std::string& label) { return index_in(what_taxonomy(), label); }

int why_label_index(const std::string& label) { return index_in(why_taxonomy(), label); }

std::string DatasetRecord::to_json() const {
    json j;
    j["project"] = project;
    j["file"] = file;
    j["line"] = line;
    j["what"] = what;
    j["why"] = why;
    j["context-source"] = context_source;
    return j.dump();
}

DatasetRecord DatasetRecord::from_json(const std::string& text) {
    json j = json::parse(text);
    DatasetRecord r;
    r.project = j.at("project").get<std::string>();
    r.file = j.at("file").get<std::string>();
    r.line = j.at("line").get<int>();
    r.what = j.at("what").get<std::string>();
    r.why = j.at("why").get<std::string>();
    if (j.contains("context-source")) r.context_source = j.at("context-source").get<std::string>();
    return r;
}

std::vector<DatasetRecord> read_dataset(const std::string& path) {
    std::string text = read_text_file(path);
    std::vector<DatasetRecord> out;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(DatasetRecord::from_json(line));
        } catch (const std::exception& e) {
            throw ValidationError(fmt::format("{} line {}: {}", path, number, e.what()));
        }
    }
    return out;
}

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records) {
    std::string text;
    for (const DatasetRecord& r : records) text += r.to_json() + "\n";
    write_text_file(path, text);
}

void validate_dataset(const std::vector<DatasetRecord>& records) {
    for (const DatasetRecord& r : records) {
        if (what_label_index(r.what) < 0)
            throw ValidationError(fmt::format(
                "record {}:{} has WHAT label \"{}\" outside the taxonomy", r.file, r.line, r.what));
        if (why_label_index(r.why) < 0)
            throw ValidationError(fmt::format(
                "record {}:{} has WHY label \"{}\" outside the taxonomy", r.file, r.line, r.why));
        if (r.line < 1)
            throw ValidationError(
                fmt::format("record {}:{} has a non-positive line", r.file, r.line));
    }
}

ExtractionResult extract_project(const std::string& project_path, bool include_vendored) {
    fs::path root(project_path);
    std::error_code ec;
    fs::file_status status = fs::status(root, ec);
    if (ec || status.type() == fs::file_type::not_found)
        throw IoError("cannot read project path: " + project_path);

    std::vector<std::pair<std::string, std::string>> files;  // absolute, relative
    if (fs::is_regular_file(status)) {
        files.emplace_back(root.string(), root.filename().generic_string());
        root = root.parent_path();
    } else {
        fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied,
                                            ec);
        if (ec) throw IoError("cannot read project path: " + project_path);
        for (auto end = fs::end(it); it != end; it.increment(ec)) {
            if (ec) throw IoError(fmt::format("cannot walk {}: {}", project_path, ec.message()));
            const fs::directory_entry& entry = *it;
            std::string name = entry.path().filename().generic_string();
            if (entry.is_directory()) {
                bool hidden = !name.empty() && name.front() == '.';
                if (hidden || (name == "vendor" && !include_vendored))
                    it.disable_recursion_pending();
                continue;
            }
            if (!entry.is_regular_file() || entry.path().extension() != ".go") continue;
            files.emplace_back(entry.path().string(),
                               fs::relative(entry.path(), root).generic_string());
        }
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });

    const std::string module_path = module_path_of(root);
    std::vector<FileExtraction> slots(files.size());
    std::size_t workers = std::min<std::size_t>(std::thread::hardware_concurrency(), files.size());
    if (workers == 0) workers = 1;
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < files.size(); i = next.fetch_add(1))
                slots[i] = extract_file(files[i].first, files[i].second, module_path);
        });
    }
    for (std::thread& t : pool) t.join();

    ExtractionResult out;
    out.files_seen = static_cast<int>(files.size());
    for (FileExtraction& slot : slots) {
        out.files_parsed += slot.parsed;
        for (std::string& e : slot.errors) out.file_errors.push_back(std::move(e));
        for (ExtractedUsage& u : slot.usages) out.usages.push_back(std::move(u));
    }
    if (out.files_seen > 0 && out.files_parsed == 0)
        throw ValidationError(fmt::format("no Go file under {} parsed ({} errors)", project_path,
                                          out.file_errors.size()));
    std::stable_sort(out.usages.begin(), out.usages.end(),
                     [](const ExtractedUsage& a, const ExtractedUsage& b) {
                         return std::tie(a.file, a.line, a.col) < std::tie(b.file, b.line, b.col);
                     });
    return out;
}

LabeledCorpus join_dataset(const ExtractionResult& extraction,
                           const std::vector<DatasetRecord>& records) {
    validate_dataset(records);
    std::map<std::pair<std::string, int>, std::deque<const DatasetRecord*>> by_site;
    for (const DatasetRecord& r : records) by_site[{r.file, r.line}].push_back(&r);

    LabeledCorpus out;
    for (const ExtractedUsage& usage : extraction.usages) {
        auto it = by_site.find({usage.file, usage.line});
        if (it == by_site.end() || it->second.empty()) {
            out.warnings.push_back(fmt::format("usage {}:{}:{} has no dataset record, skipped",
                                               usage.file, usage.line, usage.col));
            continue;
        }
        const DatasetRecord* record = it->second.front();
        it->second.pop_front();
        AblationInstance inst;
        inst.graph = usage.graph;
        inst.usage_vertex = usage.usage_vertex;
        inst.gold_what = what_label_index(record->what);
        inst.gold_why = why_label_index(record->why);
        out.instances.push_back(std::move(inst));
    }
    for (const auto& [site, left] : by_site) {
        if (left.empty()) continue;
        const DatasetRecord* r = left.front();
        throw ValidationError(
            fmt::format("record {}:{} (what={}, why={}) matches no extracted usage", r->file,
                        r->line, r->what, r->why));
    }
    return out;
}

std::uint64_t instance_hash(const AblationInstance& instance) {
    return fnv1a(fmt::format("{}|{}|{}|{}", dump_cfg(instance.graph), instance.usage_vertex,
                             instance.gold_what, instance.gold_why));
}

FoldOutcome run_fold_protocol(const std::vector<AblationInstance>& data, const FoldPlan& plan,
                              int fold, const ProtocolOptions& options) {
    if (data.empty()) throw ValidationError("protocol requires instances");
    if (options.repeats < 1) throw ValidationError("repeats must be positive");

    std::vector<std::pair<int, int>> labels;
    int what_classes = options.what_classes;
    int why_classes = options.why_classes;
    for (const AblationInstance& inst : data) {
        if (inst.gold_what < 0 || inst.gold_why < 0)
            throw ValidationError("protocol requires gold labels on every instance");
        labels.emplace_back(inst.gold_what, inst.gold_why);
        what_classes = std::max(what_classes, inst.gold_what + 1);
        why_classes = std::max(why_classes, inst.gold_why + 1);
    }

    FoldSplit split = fold_split(plan, labels, fold, options.train.seed);
    std::vector<const EnrichedCfg*> fit_graphs;
    for (int id : split.train) fit_graphs.push_back(&data[id].graph);
    for (int id : split.validation) fit_graphs.push_back(&data[id].graph);

    FoldOutcome out;
    out.fold = fold;
    out.vocabulary = build_vocabulary(fit_graphs, options.vocabulary_k);

    auto encode = [&](const std::vector<int>& ids) {
        std::vector<EncodedInstance> encoded;
        for (int id : ids) {
            EncodedInstance inst =
                encode_graph(data[id].graph, data[id].usage_vertex, out.vocabulary,
                             options.subset);
            inst.gold_what = data[id].gold_what;
            inst.gold_why = data[id].gold_why;
            encoded.push_back(std::move(inst));
        }
        return encoded;
    };
    std::vector<EncodedInstance> train_set = encode(split.train);
    std::vector<EncodedInstance> val_set = encode(split.validation);
    std::vector<EncodedInstance> test_set = encode(split.test);

    const int input_dim = out.vocabulary.n();
    bool tuned = options.tune_budget > 0;
    if (tuned) {
        ConfigSampler sampler = [&](std::mt19937_64& rng) {
            return sample_table_config(options.variant, input_dim, what_classes, why_classes,
                                       rng);
        };
        std::uint64_t tune_seed =
            options.train.seed ^ (0x517cc1b727220a95ull + static_cast<std::uint64_t>(fold));
        HyperbandResult result = hyperband(sampler, train_set, val_set, options.tune_budget,
                                           options.eta, tune_seed, options.train);
        out.config = result.config;
    } else {
        out.config = protocol_config(options, input_dim, what_classes, why_classes);
    }

    double best_loss = 0.0;
    for (int r = 0; r < options.repeats; ++r) {
        TrainOptions topts = options.train;
        topts.seed = options.train.seed ^
                     (static_cast<std::uint64_t>(fold) * 0x9e3779b97f4a7c15ull) ^
                     static_cast<std::uint64_t>(r);
        TrainRunResult run = train(out.config, train_set, val_set, topts);
        TrainRunSummary summary;
        summary.repeat = r;
        summary.seed = topts.seed;
        summary.epochs_run = run.epochs_run;
        summary.best_epoch = run.best_epoch;
        summary.val_loss = run.val_loss;
        summary.val_accuracy = joint_top1_accuracy(out.config, run.best_params, val_set);
        out.runs.push_back(summary);
        if (r == 0 || run.val_loss < best_loss) {
            best_loss = run.val_loss;
            out.best_repeat = r;
            out.params = std::move(run.best_params);
        }
    }

    std::vector<std::vector<double>> what_logits, why_logits;
    std::vector<int> what_gold, why_gold;
    for (const EncodedInstance& inst : val_set) {
        Logits logits = classify(inst, out.params, out.config);
        what_logits.push_back(row_of(logits.what));
        why_logits.push_back(row_of(logits.why));
        what_gold.push_back(inst.gold_what);
        why_gold.push_back(inst.gold_why);
    }
    out.calibration =
        calibrate_heads(what_logits, what_gold, why_logits, why_gold, options.epsilon);
    out.params.t_what = out.calibration.t_what;
    out.params.t_why = out.calibration.t_why;

    out.metrics = evaluate_model(out.config, out.params, out.calibration, test_set);
    out.metrics.fold = fold;
    out.metrics.repeat = out.best_repeat;

    FoldTrace& trace = out.trace;
    trace.fold = fold;
    trace.vocabulary_ids = split.train;
    trace.vocabulary_ids.insert(trace.vocabulary_ids.end(), split.validation.begin(),
                                split.validation.end());
    if (tuned) trace.tuning_ids = trace.vocabulary_ids;
    trace.calibration_ids = split.validation;
    trace.test_ids = split.test;
    for (int id : trace.test_ids) trace.test_hashes.push_back(instance_hash(data[id]));
    for (int id : trace.vocabulary_ids) trace.fit_input_hashes.push_back(instance_hash(data[id]));
    return out;
}

void ModelBundle::save(const std::string& dir) const {
    ensure_out_dir(dir);
    fs::path base(dir);
    write_text_file((base / "checkpoint.json").string(), checkpoint.to_json());
    write_text_file((base / "vocabulary.json").string(), vocabulary.to_json() + "\n");
    write_text_file((base / "calibration.json").string(), calibration.to_json());
    json manifest;
    manifest["format"] = "gounsafe-bundle-v1";
    manifest["subset"] = feature_subset_name(subset);
    manifest["seed"] = hash_hex(seed);
    write_text_file((base / "manifest.json").string(), manifest.dump() + "\n");
}

ModelBundle ModelBundle::load(const std::string& dir) {
    fs::path base(dir);
    ModelBundle bundle;
    try {
        bundle.checkpoint = Checkpoint::load((base / "checkpoint.json").string());
        bundle.vocabulary =
            LabelVocabulary::from_json(read_text_file((base / "vocabulary.json").string()));
        bundle.calibration =
            CalibrationArtifact::from_json(read_text_file((base / "calibration.json").string()));
        json manifest = json::parse(read_text_file((base / "manifest.json").string()));
        bundle.subset = feature_subset_from_name(manifest.at("subset").get<std::string>());
        bundle.seed = std::stoull(manifest.at("seed").get<std::string>(), nullptr, 16);
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        throw ValidationError(fmt::format("model bundle {}: {}", dir, e.what()));
    }
    if (bundle.checkpoint.vocabulary_hash != bundle.vocabulary.hash())
        throw VocabularyMismatch(
            fmt::format("checkpoint in {} was trained with a different vocabulary", dir));
    if (bundle.checkpoint.manifest_hash != bundle.vocabulary.finite.hash())
        throw VocabularyMismatch(
            fmt::format("checkpoint in {} was trained with a different finite manifest", dir));
    bundle.calibration.validate();
    return bundle;
}

PredictionReport predict_project(const ExtractionResult& extraction, const ModelBundle& bundle) {
    const ModelConfig& config = bundle.checkpoint.config;
    const CalibrationArtifact& calibration = bundle.calibration;
    if (bundle.vocabulary.n() != config.input_dim)
        throw VocabularyMismatch(
            fmt::format("vocabulary dimension {} does not match the model input dimension {}",
                        bundle.vocabulary.n(), config.input_dim));

    PredictionReport report;
    report.model_hash = hash_hex(fnv1a(bundle.checkpoint.to_json()));
    report.config_hash = hash_hex(fnv1a(config.to_json()));
    report.vocabulary_hash = hash_hex(bundle.vocabulary.hash());
    report.epsilon = calibration.epsilon;
    report.warnings = extraction.file_errors;

    for (const ExtractedUsage& usage : extraction.usages) {
        EncodedInstance inst =
            encode_graph(usage.graph, usage.usage_vertex, bundle.vocabulary, bundle.subset);
        Logits logits = classify(inst, bundle.checkpoint.params, config);
        UsagePrediction entry;
        entry.file = usage.file;
        entry.line = usage.line;
        entry.col = usage.col;
        entry.what_set =
            conformal_predict(row_of(logits.what), calibration.t_what, calibration.threshold_what);
        entry.why_set =
            conformal_predict(row_of(logits.why), calibration.t_why, calibration.threshold_why);
        entry.top_what = label_string(what_taxonomy(), entry.what_set.labels.front());
        entry.top_why = label_string(why_taxonomy(), entry.why_set.labels.front());
        report.entries.push_back(std::move(entry));
    }
    return report;
}

std::string PredictionReport::to_jsonl() const {
    std::string out;
    for (const UsagePrediction& entry : entries) {
        json j;
        j["file"] = entry.file;
        j["line"] = entry.line;
        j["col"] = entry.col;
        j["top-what"] = entry.top_what;
        j["top-why"] = entry.top_why;
        j["what-set"] = set_json(entry.what_set, what_taxonomy());
        j["why-set"] = set_json(entry.why_set, why_taxonomy());
        j["model-hash"] = model_hash;
        j["config-hash"] = config_hash;
        j["vocabulary-hash"] = vocabulary_hash;
        j["epsilon"] = epsilon;
        out += j.dump() + "\n";
    }
    return out;
}

std::string PredictionReport::to_text() const {
    std::string out = fmt::format("model {}  config {}  vocabulary {}  epsilon {:.3f}\n",
                                  model_hash, config_hash, vocabulary_hash, epsilon);
    out += fmt::format("{} usage(s)\n", entries.size());
    for (const UsagePrediction& entry : entries) {
        out += fmt::format("{}:{}:{}\t{}/{}\twhat{}\twhy{}\n", entry.file, entry.line, entry.col,
                           entry.top_what, entry.top_why, set_text(entry.what_set, what_taxonomy()),
                           set_text(entry.why_set, why_taxonomy()));
    }
    return out;
}

void cmd_extract(const ExtractOptions& options, std::ostream& out, std::ostream& err) {
    ExtractionResult extraction =
        extract_project(options.project, options.common.include_vendored);
    for (const std::string& e : extraction.file_errors) err << "warning: " << e << "\n";

    LabelVocabulary vocabulary;
    if (!options.vocabulary_path.empty()) {
        vocabulary = LabelVocabulary::from_json(read_text_file(options.vocabulary_path));
    } else {
        std::vector<const EnrichedCfg*> graphs;
        for (const ExtractedUsage& u : extraction.usages) graphs.push_back(&u.graph);
        vocabulary = build_vocabulary(graphs, options.vocabulary_k);
    }

    std::string inventory;
    std::string instances;
    for (const ExtractedUsage& usage : extraction.usages) {
        json j;
        j["file"] = usage.file;
        j["line"] = usage.line;
        j["col"] = usage.col;
        j["api-member"] = usage.api_member;
        j["context-kind"] = usage.context_kind;
        inventory += j.dump() + "\n";
        instances +=
            encode_graph(usage.graph, usage.usage_vertex, vocabulary, options.subset).to_json() +
            "\n";
    }

    if (!options.common.out_dir.empty()) {
        fs::path base(ensure_out_dir(options.common.out_dir));
        write_text_file((base / "inventory.jsonl").string(), inventory);
        write_text_file((base / "instances.jsonl").string(), instances);
        write_text_file((base / "vocabulary.json").string(), vocabulary.to_json() + "\n");
    }

    if (options.common.format == "jsonl") {
        out << inventory;
    } else {
        out << fmt::format("{} file(s), {} parsed, {} usage(s), vocabulary n={}\n",
                           extraction.files_seen, extraction.files_parsed,
                           extraction.usages.size(), vocabulary.n());
        for (const ExtractedUsage& usage : extraction.usages)
            out << fmt::format("{}:{}:{}\t{}\t{}\n", usage.file, usage.line, usage.col,
                               usage.api_member, usage.context_kind);
    }
}

void cmd_train(const TrainCmdOptions& options, std::ostream& out, std::ostream& err) {
    if (options.common.out_dir.empty()) throw ValidationError("train requires --out");
    LoadedCorpus loaded =
        load_corpus(options.project, options.dataset, options.common.include_vendored, err);

    ProtocolOptions popts;
    popts.variant = options.variant;
    popts.subset = options.subset;
    popts.train.seed = options.common.seed;
    popts.train.max_epochs = options.max_epochs;
    popts.repeats = options.repeats;
    popts.vocabulary_k = options.vocabulary_k;
    popts.epsilon = options.epsilon;
    popts.what_classes = static_cast<int>(what_taxonomy().size());
    popts.why_classes = static_cast<int>(why_taxonomy().size());
    if (!options.config_path.empty()) {
        popts.config = ModelConfig::from_json(read_text_file(options.config_path));
        popts.have_config = true;
        popts.variant = popts.config.variant;
    }

    FoldPlan plan = make_folds(loaded.labels, popts.train.seed);
    FoldOutcome outcome = run_fold_protocol(loaded.corpus.instances, plan, 0, popts);

    ModelBundle bundle;
    bundle.checkpoint.config = outcome.config;
    bundle.checkpoint.params = outcome.params;
    bundle.checkpoint.vocabulary_hash = outcome.vocabulary.hash();
    bundle.checkpoint.manifest_hash = outcome.vocabulary.finite.hash();
    bundle.vocabulary = outcome.vocabulary;
    bundle.calibration = outcome.calibration;
    bundle.subset = options.subset;
    bundle.seed = options.common.seed;
    bundle.save(options.common.out_dir);

    fs::path base(options.common.out_dir);
    LedgerWriter ledger((base / "ledger.jsonl").string(), false);
    ledger.write(json{{"stage", "dataset"},
                      {"records", loaded.records.size()},
                      {"instances", loaded.corpus.instances.size()},
                      {"skipped-usages", loaded.corpus.warnings.size()}});
    json sizes = json::array();
    for (const auto& fold : plan.folds) sizes.push_back(fold.size());
    ledger.write(json{{"stage", "folds"}, {"seed", hash_hex(popts.train.seed)}, {"sizes", sizes}});
    for (const TrainRunSummary& run : outcome.runs) ledger.write(run_summary_json(run));
    ledger.write(json{{"stage", "select"},
                      {"best-repeat", outcome.best_repeat},
                      {"val-loss", outcome.runs[outcome.best_repeat].val_loss}});
    ledger.write(calibration_json(outcome.calibration));
    json eval = metrics_json(outcome.metrics);
    eval["stage"] = "evaluation";
    ledger.write(eval);
    ledger.write(json{{"stage", "artifacts"},
                      {"checkpoint-hash", hash_hex(fnv1a(bundle.checkpoint.to_json()))},
                      {"config-hash", hash_hex(fnv1a(outcome.config.to_json()))},
                      {"vocabulary-hash", hash_hex(outcome.vocabulary.hash())},
                      {"manifest-hash", hash_hex(outcome.vocabulary.finite.hash())}});

    std::string csv = metrics_csv_header() + "\n" +
                      metrics_csv_row(model_variant_name(outcome.config.variant),
                                      feature_subset_name(options.subset), outcome.metrics) +
                      "\n";
    write_text_file((base / "metrics.csv").string(), csv);

    out << fmt::format("trained {} on {} instance(s): best repeat {} val loss {:.4f}\n",
                       model_variant_name(outcome.config.variant),
                       loaded.corpus.instances.size(), outcome.best_repeat,
                       outcome.runs[outcome.best_repeat].val_loss);
    out << fmt::format(
        "test fold 0: top-1 joint {:.3f}, top-3 joint {:.3f}, conformal coverage {:.3f}\n",
        outcome.metrics.top1_joint, outcome.metrics.top3_joint,
        outcome.metrics.conformal_acc_joint);
    out << "model bundle written to " << options.common.out_dir << "\n";
}

void cmd_tune(const TuneCmdOptions& options, std::ostream& out, std::ostream& err) {
    LoadedCorpus loaded =
        load_corpus(options.project, options.dataset, options.common.include_vendored, err);

    FoldPlan plan = make_folds(loaded.labels, options.common.seed);
    FoldSplit split = fold_split(plan, loaded.labels, 0, options.common.seed);
    std::vector<const EnrichedCfg*> fit_graphs;
    for (int id : split.train) fit_graphs.push_back(&loaded.corpus.instances[id].graph);
    for (int id : split.validation) fit_graphs.push_back(&loaded.corpus.instances[id].graph);
    LabelVocabulary vocabulary = build_vocabulary(fit_graphs, options.vocabulary_k);

    auto encode = [&](const std::vector<int>& ids) {
        std::vector<EncodedInstance> encoded;
        for (int id : ids) {
            const AblationInstance& src = loaded.corpus.instances[id];
            EncodedInstance inst =
                encode_graph(src.graph, src.usage_vertex, vocabulary, options.subset);
            inst.gold_what = src.gold_what;
            inst.gold_why = src.gold_why;
            encoded.push_back(std::move(inst));
        }
        return encoded;
    };
    std::vector<EncodedInstance> train_set = encode(split.train);
    std::vector<EncodedInstance> val_set = encode(split.validation);

    const int what_classes = static_cast<int>(what_taxonomy().size());
    const int why_classes = static_cast<int>(why_taxonomy().size());
    ConfigSampler sampler = [&](std::mt19937_64& rng) {
        return sample_table_config(options.variant, vocabulary.n(), what_classes, why_classes,
                                   rng);
    };
    HyperbandResult result = hyperband(sampler, train_set, val_set, options.budget, options.eta,
                                       options.common.seed);

    if (!options.common.out_dir.empty()) {
        fs::path base(ensure_out_dir(options.common.out_dir));
        write_text_file((base / "tuned-config.json").string(), result.config.to_json());
        LedgerWriter ledger((base / "ledger.jsonl").string(), false);
        ledger.write(json{{"stage", "tune"},
                          {"budget", options.budget},
                          {"eta", options.eta},
                          {"seed", hash_hex(options.common.seed)},
                          {"runs", result.runs},
                          {"val-accuracy", result.accuracy},
                          {"config-hash", hash_hex(fnv1a(result.config.to_json()))}});
    }

    out << fmt::format("tuned {} over {} run(s): val accuracy {:.3f}\n",
                       model_variant_name(options.variant), result.runs, result.accuracy);
    out << result.config.to_json();
}

void cmd_calibrate(const CalibrateCmdOptions& options, std::ostream& out, std::ostream& err) {
    if (options.model_dir.empty()) throw ValidationError("calibrate requires --model");
    ModelBundle bundle = ModelBundle::load(options.model_dir);
    LoadedCorpus loaded =
        load_corpus(options.project, options.dataset, options.common.include_vendored, err);

    FoldPlan plan = make_folds(loaded.labels, bundle.seed);
    FoldSplit split = fold_split(plan, loaded.labels, 0, bundle.seed);

    std::vector<std::vector<double>> what_logits, why_logits;
    std::vector<int> what_gold, why_gold;
    for (int id : split.validation) {
        const AblationInstance& src = loaded.corpus.instances[id];
        EncodedInstance inst =
            encode_graph(src.graph, src.usage_vertex, bundle.vocabulary, bundle.subset);
        Logits logits = classify(inst, bundle.checkpoint.params, bundle.checkpoint.config);
        what_logits.push_back(row_of(logits.what));
        why_logits.push_back(row_of(logits.why));
        what_gold.push_back(src.gold_what);
        why_gold.push_back(src.gold_why);
    }
    bundle.calibration =
        calibrate_heads(what_logits, what_gold, why_logits, why_gold, options.epsilon);
    bundle.checkpoint.params.t_what = bundle.calibration.t_what;
    bundle.checkpoint.params.t_why = bundle.calibration.t_why;

    const std::string target =
        options.common.out_dir.empty() ? options.model_dir : options.common.out_dir;
    bundle.save(target);
    LedgerWriter ledger((fs::path(target) / "ledger.jsonl").string(), target == options.model_dir);
    ledger.write(calibration_json(bundle.calibration));

    out << fmt::format(
        "calibrated on {} instance(s): epsilon {:.3f}, t_what {:.4f}, t_why {:.4f}, "
        "thresholds {:.4f}/{:.4f}\n",
        bundle.calibration.calibration_size, bundle.calibration.epsilon,
        bundle.calibration.t_what, bundle.calibration.t_why, bundle.calibration.threshold_what,
        bundle.calibration.threshold_why);
}

void cmd_evaluate(const EvaluateCmdOptions& options, std::ostream& out, std::ostream& err) {
    LoadedCorpus loaded =
        load_corpus(options.project, options.dataset, options.common.include_vendored, err);

    std::string csv = metrics_csv_header() + "\n";
    if (options.ablation) {
        AblationOptions aopts;
        aopts.model.what_classes = static_cast<int>(what_taxonomy().size());
        aopts.model.why_classes = static_cast<int>(why_taxonomy().size());
        aopts.train.seed = options.common.seed;
        aopts.train.max_epochs = options.max_epochs;
        aopts.folds_evaluated = options.folds;
        aopts.vocabulary_k = options.vocabulary_k;
        aopts.epsilon = options.epsilon;
        std::vector<ModelVariant> variants(model_variants().begin(), model_variants().end());
        std::vector<AblationCell> cells =
            run_ablation(loaded.corpus.instances, variants, feature_subsets(), aopts);
        for (const AblationCell& cell : cells)
            csv += metrics_csv_row(cell.model, feature_subset_name(cell.subset), cell.metrics) +
                   "\n";
        out << csv;
    } else {
        ProtocolOptions popts;
        popts.variant = options.variant;
        popts.subset = options.subset;
        popts.train.seed = options.common.seed;
        popts.train.max_epochs = options.max_epochs;
        popts.repeats = options.repeats;
        popts.vocabulary_k = options.vocabulary_k;
        popts.epsilon = options.epsilon;
        popts.what_classes = static_cast<int>(what_taxonomy().size());
        popts.why_classes = static_cast<int>(why_taxonomy().size());

        if (options.folds < 1 || options.folds > 10)
            throw ValidationError("folds outside [1, 10]");
        FoldPlan plan = make_folds(loaded.labels, popts.train.seed);
        std::vector<double> top1, top3, coverage;
        for (int fold = 0; fold < options.folds; ++fold) {
            FoldOutcome outcome = run_fold_protocol(loaded.corpus.instances, plan, fold, popts);
            csv += metrics_csv_row(model_variant_name(options.variant),
                                   feature_subset_name(options.subset), outcome.metrics) +
                   "\n";
            top1.push_back(outcome.metrics.top1_joint);
            top3.push_back(outcome.metrics.top3_joint);
            coverage.push_back(outcome.metrics.conformal_acc_joint);
        }
        out << csv;
        AggregateStats t1 = aggregate(top1), t3 = aggregate(top3), cov = aggregate(coverage);
        out << fmt::format(
            "aggregate over {} fold(s): top-1 joint {:.3f}±{:.3f}, top-3 joint {:.3f}±{:.3f}, "
            "coverage {:.3f}±{:.3f}\n",
            options.folds, t1.mean, t1.std_dev, t3.mean, t3.std_dev, cov.mean, cov.std_dev);
    }

    if (options.stretch_targets) {
        out << "reference targets (full-corpus scale, not expected at desk scale):\n"
               "  top-1 per dimension > 0.86\n"
               "  top-1 joint        ~ 0.80\n"
               "  top-3 joint        > 0.91\n"
               "  conformal coverage > 0.93 with mean set size ~ 2\n";
    }

    if (!options.common.out_dir.empty()) {
        fs::path base(ensure_out_dir(options.common.out_dir));
        write_text_file((base / (options.ablation ? "ablation.csv" : "metrics.csv")).string(),
                        csv);
    }
}

void cmd_predict(const PredictCmdOptions& options, std::ostream& out, std::ostream& err) {
    if (options.model_dir.empty()) throw ValidationError("predict requires --model");
    ModelBundle bundle = ModelBundle::load(options.model_dir);
    ExtractionResult extraction =
        extract_project(options.project, options.common.include_vendored);
    PredictionReport report = predict_project(extraction, bundle);
    for (const std::string& w : report.warnings) err << "warning: " << w << "\n";

    if (options.common.format == "jsonl") out << report.to_jsonl();
    else out << report.to_text();

    if (!options.common.out_dir.empty()) {
        fs::path base(ensure_out_dir(options.common.out_dir));
        write_text_file((base / "report.jsonl").string(), report.to_jsonl());
        write_text_file((base / "report.txt").string(), report.to_text());
    }
}

}  // namespace gounsafe
