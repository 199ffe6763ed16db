#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gounsafe/conformal.hpp"
#include "gounsafe/train.hpp"

namespace gounsafe {

class LengthMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MetricsRecord {
    double top1_what = 0.0;
    double top1_why = 0.0;
    double top1_joint = 0.0;
    double top3_joint = 0.0;
    double conformal_acc_joint = 0.0;
    double mean_set_size_what = 0.0;
    double mean_set_size_why = 0.0;
    int fold = -1;
    int repeat = -1;
};

double topk_accuracy(const std::vector<std::vector<double>>& preds, const std::vector<int>& gold,
                     int k);
double topk_joint_accuracy(const std::vector<Logits>& preds,
                           const std::vector<std::pair<int, int>>& gold, int k);

struct ConformalMetrics {
    double coverage_what = 0.0;
    double coverage_why = 0.0;
    double coverage_joint = 0.0;
    double mean_size_what = 0.0;
    double mean_size_why = 0.0;
};

ConformalMetrics conformal_metrics(const std::vector<PredictionSet>& what_sets,
                                   const std::vector<PredictionSet>& why_sets,
                                   const std::vector<std::pair<int, int>>& gold);

std::vector<std::vector<double>> confusion_matrix(const std::vector<int>& preds,
                                                  const std::vector<int>& gold, int num_classes);
std::string confusion_matrix_text(const std::vector<std::vector<double>>& matrix);

MetricsRecord evaluate_model(const ModelConfig& config, const ModelParams& params,
                             const CalibrationArtifact& calibration,
                             const std::vector<EncodedInstance>& test_set);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& model, const std::string& subset,
                            const MetricsRecord& metrics);

struct AblationInstance {
    EnrichedCfg graph;
    int usage_vertex = 0;
    int gold_what = -1;
    int gold_why = -1;
};

struct AblationOptions {
    ModelConfig model;  // depth, width, activation, and pooling template;
                        // variant, input_dim, and class counts are stamped per cell
    TrainOptions train;
    int folds_evaluated = 1;
    int vocabulary_k = 127;
    double epsilon = 0.1;
};

struct AblationCell {
    std::string model;
    FeatureSubset subset = FeatureSubset::All;
    MetricsRecord metrics;
};

std::vector<AblationCell> run_ablation(const std::vector<AblationInstance>& data,
                                       const std::vector<ModelVariant>& variants,
                                       const std::vector<FeatureSubset>& subsets,
                                       const AblationOptions& options);

}  // namespace gounsafe
