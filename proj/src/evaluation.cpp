#include "gounsafe/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>

#include "gounsafe/encoder.hpp"

namespace gounsafe {
namespace {

std::vector<double> row_of(const Tensor& t) {
    std::vector<double> out(t.cols());
    for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(c);
    return out;
}

// Position of `label` in a stable descending sort of the scores.
int descending_rank(const std::vector<double>& scores, int label) {
    int rank = 0;
    for (int c = 0; c < static_cast<int>(scores.size()); ++c) {
        if (scores[c] > scores[label]) ++rank;
        else if (scores[c] == scores[label] && c < label) ++rank;
    }
    return rank;
}

bool in_top_k(const std::vector<double>& scores, int label, int k) {
    return descending_rank(scores, label) < k;
}

bool set_contains(const PredictionSet& set, int label) {
    return std::find(set.labels.begin(), set.labels.end(), label) != set.labels.end();
}

void check_gold(const std::vector<std::pair<int, int>>& gold, int what_classes, int why_classes) {
    for (const auto& [gw, gy] : gold) {
        if (gw < 0 || gw >= what_classes || gy < 0 || gy >= why_classes)
            throw std::invalid_argument("gold label out of range");
    }
}

std::vector<double> label_frequencies(const std::vector<int>& labels, int num_classes) {
    std::vector<double> freq(num_classes, 0.0);
    for (int label : labels) freq[label] += 1.0;
    for (double& f : freq) f /= static_cast<double>(labels.size());
    return freq;
}

struct FoldData {
    std::vector<std::pair<int, int>> gold_train;  // train plus validation
    std::vector<std::pair<int, int>> gold_val;
    std::vector<std::pair<int, int>> gold_test;
    std::vector<EncodedInstance> train;
    std::vector<EncodedInstance> validation;
    std::vector<EncodedInstance> test;
};

MetricsRecord mean_over_folds(const std::vector<MetricsRecord>& folds) {
    MetricsRecord mean;
    for (const MetricsRecord& m : folds) {
        mean.top1_what += m.top1_what;
        mean.top1_why += m.top1_why;
        mean.top1_joint += m.top1_joint;
        mean.top3_joint += m.top3_joint;
        mean.conformal_acc_joint += m.conformal_acc_joint;
        mean.mean_set_size_what += m.mean_set_size_what;
        mean.mean_set_size_why += m.mean_set_size_why;
    }
    double n = static_cast<double>(folds.size());
    mean.top1_what /= n;
    mean.top1_why /= n;
    mean.top1_joint /= n;
    mean.top3_joint /= n;
    mean.conformal_acc_joint /= n;
    mean.mean_set_size_what /= n;
    mean.mean_set_size_why /= n;
    mean.fold = folds.size() == 1 ? folds.front().fold : -1;
    return mean;
}

}  // namespace

double topk_accuracy(const std::vector<std::vector<double>>& preds, const std::vector<int>& gold,
                     int k) {
    if (preds.size() != gold.size())
        throw LengthMismatch("prediction and gold counts differ: " +
                             std::to_string(preds.size()) + " vs " + std::to_string(gold.size()));
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (preds.empty()) throw std::invalid_argument("topk_accuracy requires instances");
    int hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (gold[i] < 0 || gold[i] >= static_cast<int>(preds[i].size()))
            throw std::invalid_argument("gold label out of range");
        if (in_top_k(preds[i], gold[i], k)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double topk_joint_accuracy(const std::vector<Logits>& preds,
                           const std::vector<std::pair<int, int>>& gold, int k) {
    if (preds.size() != gold.size())
        throw LengthMismatch("prediction and gold counts differ: " +
                             std::to_string(preds.size()) + " vs " + std::to_string(gold.size()));
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (preds.empty()) throw std::invalid_argument("topk_joint_accuracy requires instances");
    int hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        std::vector<double> what = row_of(preds[i].what);
        std::vector<double> why = row_of(preds[i].why);
        const auto& [gw, gy] = gold[i];
        if (gw < 0 || gw >= static_cast<int>(what.size()) || gy < 0 ||
            gy >= static_cast<int>(why.size()))
            throw std::invalid_argument("gold label out of range");
        if (in_top_k(what, gw, k) && in_top_k(why, gy, k)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

ConformalMetrics conformal_metrics(const std::vector<PredictionSet>& what_sets,
                                   const std::vector<PredictionSet>& why_sets,
                                   const std::vector<std::pair<int, int>>& gold) {
    if (what_sets.size() != gold.size() || why_sets.size() != gold.size())
        throw LengthMismatch("set and gold counts differ");
    if (gold.empty()) throw std::invalid_argument("conformal_metrics requires instances");
    ConformalMetrics out;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        bool what_hit = set_contains(what_sets[i], gold[i].first);
        bool why_hit = set_contains(why_sets[i], gold[i].second);
        out.coverage_what += what_hit;
        out.coverage_why += why_hit;
        out.coverage_joint += what_hit && why_hit;
        out.mean_size_what += static_cast<double>(what_sets[i].labels.size());
        out.mean_size_why += static_cast<double>(why_sets[i].labels.size());
    }
    double n = static_cast<double>(gold.size());
    out.coverage_what /= n;
    out.coverage_why /= n;
    out.coverage_joint /= n;
    out.mean_size_what /= n;
    out.mean_size_why /= n;
    return out;
}

std::vector<std::vector<double>> confusion_matrix(const std::vector<int>& preds,
                                                  const std::vector<int>& gold, int num_classes) {
    if (preds.size() != gold.size()) throw LengthMismatch("prediction and gold counts differ");
    if (num_classes < 1) throw std::invalid_argument("num_classes must be positive");
    std::vector<std::vector<double>> matrix(num_classes, std::vector<double>(num_classes, 0.0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (gold[i] < 0 || gold[i] >= num_classes || preds[i] < 0 || preds[i] >= num_classes)
            throw std::invalid_argument("label out of range");
        matrix[gold[i]][preds[i]] += 1.0;
    }
    for (auto& row : matrix) {
        double total = 0.0;
        for (double v : row) total += v;
        if (total > 0.0)
            for (double& v : row) v /= total;
    }
    return matrix;
}

std::string confusion_matrix_text(const std::vector<std::vector<double>>& matrix) {
    std::string out;
    for (std::size_t t = 0; t < matrix.size(); ++t) {
        out += fmt::format("{:>4}", t);
        for (double v : matrix[t]) out += fmt::format(" {:6.3f}", v);
        out += "\n";
    }
    return out;
}

MetricsRecord evaluate_model(const ModelConfig& config, const ModelParams& params,
                             const CalibrationArtifact& calibration,
                             const std::vector<EncodedInstance>& test_set) {
    if (test_set.empty()) throw std::invalid_argument("evaluate_model requires instances");
    calibration.validate();
    std::vector<Logits> preds;
    std::vector<std::pair<int, int>> gold;
    std::vector<PredictionSet> what_sets;
    std::vector<PredictionSet> why_sets;
    for (const EncodedInstance& inst : test_set) {
        gold.emplace_back(inst.gold_what, inst.gold_why);
        Logits logits = classify(inst, params, config);
        what_sets.push_back(conformal_predict(row_of(logits.what), calibration.t_what,
                                              calibration.threshold_what));
        why_sets.push_back(
            conformal_predict(row_of(logits.why), calibration.t_why, calibration.threshold_why));
        preds.push_back(std::move(logits));
    }
    check_gold(gold, config.what_classes, config.why_classes);

    std::vector<std::vector<double>> what_rows;
    std::vector<std::vector<double>> why_rows;
    std::vector<int> what_gold;
    std::vector<int> why_gold;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        what_rows.push_back(row_of(preds[i].what));
        why_rows.push_back(row_of(preds[i].why));
        what_gold.push_back(gold[i].first);
        why_gold.push_back(gold[i].second);
    }

    MetricsRecord m;
    m.top1_what = topk_accuracy(what_rows, what_gold, 1);
    m.top1_why = topk_accuracy(why_rows, why_gold, 1);
    m.top1_joint = topk_joint_accuracy(preds, gold, 1);
    m.top3_joint = topk_joint_accuracy(preds, gold, 3);
    ConformalMetrics cm = conformal_metrics(what_sets, why_sets, gold);
    m.conformal_acc_joint = cm.coverage_joint;
    m.mean_set_size_what = cm.mean_size_what;
    m.mean_set_size_why = cm.mean_size_why;
    return m;
}

std::string metrics_csv_header() {
    return "model,subset,fold,repeat,top1_what,top1_why,top1_joint,top3_joint,"
           "conformal_acc_joint,mean_set_size_what,mean_set_size_why";
}

std::string metrics_csv_row(const std::string& model, const std::string& subset,
                            const MetricsRecord& m) {
    return fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}", model,
                       subset, m.fold, m.repeat, m.top1_what, m.top1_why, m.top1_joint,
                       m.top3_joint, m.conformal_acc_joint, m.mean_set_size_what,
                       m.mean_set_size_why);
}

namespace {

FoldData assemble_fold(const std::vector<AblationInstance>& data,
                       const std::vector<std::pair<int, int>>& labels, const FoldPlan& plan,
                       int fold, FeatureSubset subset, int vocabulary_k, std::uint64_t seed) {
    FoldSplit split = fold_split(plan, labels, fold, seed);
    std::vector<const EnrichedCfg*> fit_graphs;
    for (int id : split.train) fit_graphs.push_back(&data[id].graph);
    for (int id : split.validation) fit_graphs.push_back(&data[id].graph);
    LabelVocabulary vocab = build_vocabulary(fit_graphs, vocabulary_k);

    auto encode = [&](const std::vector<int>& ids, std::vector<EncodedInstance>& out,
                      std::vector<std::pair<int, int>>& gold) {
        for (int id : ids) {
            EncodedInstance inst =
                encode_graph(data[id].graph, data[id].usage_vertex, vocab, subset);
            inst.gold_what = data[id].gold_what;
            inst.gold_why = data[id].gold_why;
            out.push_back(std::move(inst));
            gold.push_back(labels[id]);
        }
    };

    FoldData out;
    encode(split.train, out.train, out.gold_train);
    encode(split.validation, out.validation, out.gold_val);
    encode(split.test, out.test, out.gold_test);
    out.gold_train.insert(out.gold_train.end(), out.gold_val.begin(), out.gold_val.end());
    return out;
}

MetricsRecord model_cell_fold(const FoldData& fold_data, ModelConfig config,
                              const AblationOptions& options, std::uint64_t seed) {
    TrainOptions topts = options.train;
    topts.seed = seed;
    TrainRunResult run = train(config, fold_data.train, fold_data.validation, topts);

    std::vector<std::vector<double>> what_logits;
    std::vector<std::vector<double>> why_logits;
    std::vector<int> what_gold;
    std::vector<int> why_gold;
    for (const EncodedInstance& inst : fold_data.validation) {
        Logits logits = classify(inst, run.best_params, config);
        what_logits.push_back(row_of(logits.what));
        why_logits.push_back(row_of(logits.why));
        what_gold.push_back(inst.gold_what);
        why_gold.push_back(inst.gold_why);
    }
    CalibrationArtifact calibration =
        calibrate_heads(what_logits, what_gold, why_logits, why_gold, options.epsilon);
    return evaluate_model(config, run.best_params, calibration, fold_data.test);
}

MetricsRecord majority_cell_fold(const FoldData& fold_data, int what_classes, int why_classes,
                                 double epsilon) {
    std::vector<int> train_what;
    std::vector<int> train_why;
    for (const auto& [gw, gy] : fold_data.gold_train) {
        train_what.push_back(gw);
        train_why.push_back(gy);
    }
    std::vector<double> what_freq = label_frequencies(train_what, what_classes);
    std::vector<double> why_freq = label_frequencies(train_why, why_classes);

    std::vector<double> what_scores;
    std::vector<double> why_scores;
    for (const auto& [gw, gy] : fold_data.gold_val) {
        what_scores.push_back(giq_score(what_freq, gw));
        why_scores.push_back(giq_score(why_freq, gy));
    }
    double what_threshold = conformal_threshold(what_scores, epsilon);
    double why_threshold = conformal_threshold(why_scores, epsilon);
    PredictionSet what_set = predict_set(what_freq, what_threshold);
    PredictionSet why_set = predict_set(why_freq, why_threshold);

    std::vector<Logits> preds;
    std::vector<std::vector<double>> what_rows;
    std::vector<std::vector<double>> why_rows;
    std::vector<int> what_gold;
    std::vector<int> why_gold;
    std::vector<PredictionSet> what_sets;
    std::vector<PredictionSet> why_sets;
    Tensor what_row({1, what_freq.size()}, what_freq);
    Tensor why_row({1, why_freq.size()}, why_freq);
    for (const auto& [gw, gy] : fold_data.gold_test) {
        preds.push_back(Logits{what_row, why_row});
        what_rows.push_back(what_freq);
        why_rows.push_back(why_freq);
        what_gold.push_back(gw);
        why_gold.push_back(gy);
        what_sets.push_back(what_set);
        why_sets.push_back(why_set);
    }

    MetricsRecord m;
    m.top1_what = topk_accuracy(what_rows, what_gold, 1);
    m.top1_why = topk_accuracy(why_rows, why_gold, 1);
    m.top1_joint = topk_joint_accuracy(preds, fold_data.gold_test, 1);
    m.top3_joint = topk_joint_accuracy(preds, fold_data.gold_test, 3);
    ConformalMetrics cm = conformal_metrics(what_sets, why_sets, fold_data.gold_test);
    m.conformal_acc_joint = cm.coverage_joint;
    m.mean_set_size_what = cm.mean_size_what;
    m.mean_set_size_why = cm.mean_size_why;
    return m;
}

}  // namespace

std::vector<AblationCell> run_ablation(const std::vector<AblationInstance>& data,
                                       const std::vector<ModelVariant>& variants,
                                       const std::vector<FeatureSubset>& subsets,
                                       const AblationOptions& options) {
    if (data.empty()) throw std::invalid_argument("run_ablation requires instances");
    if (variants.empty() || subsets.empty())
        throw std::invalid_argument("run_ablation requires variants and subsets");
    if (options.folds_evaluated < 1 || options.folds_evaluated > 10)
        throw std::invalid_argument("folds_evaluated outside [1, 10]");

    std::vector<std::pair<int, int>> labels;
    int what_classes = options.model.what_classes;
    int why_classes = options.model.why_classes;
    for (const AblationInstance& inst : data) {
        if (inst.gold_what < 0 || inst.gold_why < 0)
            throw std::invalid_argument("run_ablation requires gold labels on every instance");
        labels.emplace_back(inst.gold_what, inst.gold_why);
        what_classes = std::max(what_classes, inst.gold_what + 1);
        why_classes = std::max(why_classes, inst.gold_why + 1);
    }
    FoldPlan plan = make_folds(labels, options.train.seed);

    std::vector<AblationCell> cells;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        for (std::size_t si = 0; si < subsets.size(); ++si) {
            std::vector<MetricsRecord> folds;
            for (int f = 0; f < options.folds_evaluated; ++f) {
                std::uint64_t seed =
                    options.train.seed ^ (vi * 100003u + si * 10007u + f * 101u + 1u);
                FoldData fold_data = assemble_fold(data, labels, plan, f, subsets[si],
                                                   options.vocabulary_k, seed);
                ModelConfig config = options.model;
                config.variant = variants[vi];
                config.input_dim = fold_data.train.front().n;
                config.what_classes = what_classes;
                config.why_classes = why_classes;
                MetricsRecord m = model_cell_fold(fold_data, config, options, seed);
                m.fold = f;
                folds.push_back(m);
            }
            cells.push_back(
                {model_variant_name(variants[vi]), subsets[si], mean_over_folds(folds)});
        }
    }

    std::vector<MetricsRecord> baseline_folds;
    for (int f = 0; f < options.folds_evaluated; ++f) {
        FoldData fold_data = assemble_fold(data, labels, plan, f, FeatureSubset::All,
                                           options.vocabulary_k, options.train.seed ^ (f + 1u));
        MetricsRecord m = majority_cell_fold(fold_data, what_classes, why_classes, options.epsilon);
        m.fold = f;
        baseline_folds.push_back(m);
    }
    cells.push_back({"majority", FeatureSubset::All, mean_over_folds(baseline_folds)});
    return cells;
}

}  // namespace gounsafe
