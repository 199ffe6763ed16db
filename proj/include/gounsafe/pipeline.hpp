#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gounsafe/conformal.hpp"
#include "gounsafe/evaluation.hpp"
#include "gounsafe/train.hpp"

namespace gounsafe {

// Exit code 1: the inputs are readable but wrong (bad labels, malformed
// records, incompatible artifacts).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Exit code 2: the filesystem said no.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The closed label sets of the two classification dimensions. Casts are
// split into their six subtypes; both lists end with `unused`.
const std::vector<std::string>& what_taxonomy();
const std::vector<std::string>& why_taxonomy();
int what_label_index(const std::string& label);  // -1 when absent
int why_label_index(const std::string& label);

struct DatasetRecord {
    std::string project;
    std::string file;
    int line = 0;
    std::string what;
    std::string why;
    std::string context_source;

    std::string to_json() const;
    static DatasetRecord from_json(const std::string& text);
    bool operator==(const DatasetRecord&) const = default;
};

std::vector<DatasetRecord> read_dataset(const std::string& path);
void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records);

// Checks every record against the taxonomies; the error message names the
// first offending record as file:line.
void validate_dataset(const std::vector<DatasetRecord>& records);

struct ExtractedUsage {
    std::string file;  // relative to the project root
    int line = 0;
    int col = 0;
    std::string api_member;
    std::string context_kind;
    EnrichedCfg graph;  // labeled, AST back-references cleared
    int usage_vertex = -1;
};

struct ExtractionResult {
    std::vector<ExtractedUsage> usages;  // sorted by (file, line, col)
    std::vector<std::string> file_errors;
    int files_parsed = 0;
    int files_seen = 0;
};

// Walks the project tree for .go files (vendor/ skipped by default), parses
// each file on its own task, and emits one usage per site that has a
// supported context. Throws IoError when the root is unreadable and
// ValidationError when files were found but none parsed.
ExtractionResult extract_project(const std::string& project_path, bool include_vendored = false);

// Matches records to usages by (file, line); several usages on one line
// consume that line's records in column order. A record that matches no
// usage is a validation error; an unmatched usage is merely unlabeled and
// is skipped with a warning.
struct LabeledCorpus {
    std::vector<AblationInstance> instances;
    std::vector<std::string> warnings;
};

LabeledCorpus join_dataset(const ExtractionResult& extraction,
                           const std::vector<DatasetRecord>& records);

// Which instances fed each stage of one fold's run, for leak auditing.
// Hashes cover graph structure and gold labels.
struct FoldTrace {
    int fold = 0;
    std::vector<int> vocabulary_ids;
    std::vector<int> tuning_ids;
    std::vector<int> calibration_ids;
    std::vector<int> test_ids;
    std::vector<std::uint64_t> test_hashes;
    std::vector<std::uint64_t> fit_input_hashes;  // vocabulary + tuning + calibration
};

std::uint64_t instance_hash(const AblationInstance& instance);

struct ProtocolOptions {
    ModelVariant variant = ModelVariant::Wl2Gnn;
    FeatureSubset subset = FeatureSubset::All;
    TrainOptions train;
    int repeats = 3;
    int vocabulary_k = 127;
    double epsilon = 0.1;
    int tune_budget = 0;  // Hyperband resource R; 0 skips tuning
    int eta = 3;
    int what_classes = 0;  // 0 derives the head size from the data
    int why_classes = 0;
    bool have_config = false;
    ModelConfig config;  // used instead of the variant default when have_config
};

struct TrainRunSummary {
    int repeat = 0;
    std::uint64_t seed = 0;
    int epochs_run = 0;
    int best_epoch = 0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct FoldOutcome {
    int fold = 0;
    ModelConfig config;
    LabelVocabulary vocabulary;
    ModelParams params;  // best repeat by validation loss
    int best_repeat = 0;
    std::vector<TrainRunSummary> runs;
    CalibrationArtifact calibration;
    MetricsRecord metrics;
    FoldTrace trace;
};

// One fold of the full protocol: split, fit the vocabulary on train and
// validation graphs, optionally tune, train `repeats` times, calibrate on
// the validation split, evaluate on the test fold.
FoldOutcome run_fold_protocol(const std::vector<AblationInstance>& data, const FoldPlan& plan,
                              int fold, const ProtocolOptions& options);

// A trained model's on-disk form: checkpoint.json, vocabulary.json,
// calibration.json, and manifest.json under one directory.
struct ModelBundle {
    Checkpoint checkpoint;
    LabelVocabulary vocabulary;
    CalibrationArtifact calibration;
    FeatureSubset subset = FeatureSubset::All;
    std::uint64_t seed = 0;

    void save(const std::string& dir) const;
    static ModelBundle load(const std::string& dir);
};

struct UsagePrediction {
    std::string file;
    int line = 0;
    int col = 0;
    PredictionSet what_set;
    PredictionSet why_set;
    std::string top_what;
    std::string top_why;
};

struct PredictionReport {
    std::string model_hash;
    std::string config_hash;
    std::string vocabulary_hash;
    double epsilon = 0.1;
    std::vector<UsagePrediction> entries;  // sorted by (file, line, col)
    std::vector<std::string> warnings;

    std::string to_jsonl() const;
    std::string to_text() const;
};

PredictionReport predict_project(const ExtractionResult& extraction, const ModelBundle& bundle);

struct CommonOptions {
    std::string out_dir;
    std::string format = "text";  // text | jsonl
    std::uint64_t seed = 0;
    bool include_vendored = false;
};

struct ExtractOptions {
    CommonOptions common;
    std::string project;
    std::string vocabulary_path;  // reuse instead of building fresh
    FeatureSubset subset = FeatureSubset::All;
    int vocabulary_k = 127;
};

struct TrainCmdOptions {
    CommonOptions common;
    std::string project;
    std::string dataset;
    std::string config_path;  // tuned configuration to adopt
    ModelVariant variant = ModelVariant::Wl2Gnn;
    FeatureSubset subset = FeatureSubset::All;
    double epsilon = 0.1;
    int repeats = 3;
    int max_epochs = 1000;
    int vocabulary_k = 127;
};

struct TuneCmdOptions {
    CommonOptions common;
    std::string project;
    std::string dataset;
    ModelVariant variant = ModelVariant::Wl2Gnn;
    FeatureSubset subset = FeatureSubset::All;
    int budget = 81;
    int eta = 3;
    int vocabulary_k = 127;
};

struct CalibrateCmdOptions {
    CommonOptions common;
    std::string project;
    std::string dataset;
    std::string model_dir;
    double epsilon = 0.1;
};

struct EvaluateCmdOptions {
    CommonOptions common;
    std::string project;
    std::string dataset;
    ModelVariant variant = ModelVariant::Wl2Gnn;
    FeatureSubset subset = FeatureSubset::All;
    double epsilon = 0.1;
    int folds = 1;
    int repeats = 3;
    int max_epochs = 1000;
    int vocabulary_k = 127;
    bool ablation = false;
    bool stretch_targets = false;
};

struct PredictCmdOptions {
    CommonOptions common;
    std::string project;
    std::string model_dir;
};

void cmd_extract(const ExtractOptions& options, std::ostream& out, std::ostream& err);
void cmd_train(const TrainCmdOptions& options, std::ostream& out, std::ostream& err);
void cmd_tune(const TuneCmdOptions& options, std::ostream& out, std::ostream& err);
void cmd_calibrate(const CalibrateCmdOptions& options, std::ostream& out, std::ostream& err);
void cmd_evaluate(const EvaluateCmdOptions& options, std::ostream& out, std::ostream& err);
void cmd_predict(const PredictCmdOptions& options, std::ostream& out, std::ostream& err);

}  // namespace gounsafe
