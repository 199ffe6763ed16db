#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gounsafe/models.hpp"

namespace gounsafe {

class Diverged : public std::runtime_error {
public:
    Diverged(int epoch, const std::string& msg) : std::runtime_error(msg), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

class TooFewInstances : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

ValueId joint_loss(Tape& tape, ValueId logits_what, ValueId logits_why, int gold_what,
                   int gold_why);
double joint_loss_value(const Tensor& logits_what, const Tensor& logits_why, int gold_what,
                        int gold_why);

struct TrainOptions {
    int max_epochs = 1000;
    int patience = 100;
    int batch_size = 0;  // 0 runs full batch
    AdamConfig adam;
    std::uint64_t seed = 0;
};

struct TrainRunResult {
    ModelParams best_params;
    int epochs_run = 0;
    int best_epoch = 0;
    double val_loss = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> train_losses;
    std::vector<double> val_losses;
};

TrainRunResult train(const ModelConfig& config, const std::vector<EncodedInstance>& train_set,
                     const std::vector<EncodedInstance>& val_set, const TrainOptions& options);

double dataset_loss(const ModelConfig& config, const ModelParams& params,
                    const std::vector<EncodedInstance>& data);

double joint_top1_accuracy(const ModelConfig& config, const ModelParams& params,
                           const std::vector<EncodedInstance>& data);

struct FoldPlan {
    std::vector<std::vector<int>> folds;
};

FoldPlan make_folds(const std::vector<std::pair<int, int>>& joint_labels, std::uint64_t seed);

struct FoldSplit {
    std::vector<int> train;
    std::vector<int> validation;
    std::vector<int> test;
};

FoldSplit fold_split(const FoldPlan& plan, const std::vector<std::pair<int, int>>& joint_labels,
                     int test_fold, std::uint64_t seed);

struct HyperbandRung {
    int configs = 0;
    int epochs = 0;
    bool operator==(const HyperbandRung&) const = default;
};

struct HyperbandBracket {
    int bracket = 0;
    std::vector<HyperbandRung> rungs;
    bool operator==(const HyperbandBracket&) const = default;
};

std::vector<HyperbandBracket> hyperband_schedule(int max_epochs, int eta);

using ConfigSampler = std::function<ModelConfig(std::mt19937_64&)>;

struct HyperbandResult {
    ModelConfig config;
    double accuracy = 0.0;
    int runs = 0;
};

HyperbandResult hyperband(const ConfigSampler& sample,
                          const std::vector<EncodedInstance>& train_set,
                          const std::vector<EncodedInstance>& val_set, int max_epochs, int eta,
                          std::uint64_t seed, const TrainOptions& base = {});

// Draws one configuration from the tuning grid (depths, widths, activations,
// pooling, batch norm, dropout).
ModelConfig sample_table_config(ModelVariant variant, int input_dim, int what_classes,
                                int why_classes, std::mt19937_64& rng);

struct AggregateStats {
    double mean = 0.0;
    double std_dev = 0.0;
};

AggregateStats aggregate(const std::vector<double>& values);

using MetricMap = std::map<std::string, double>;

std::map<std::string, AggregateStats> repeat_and_aggregate(
    const std::function<MetricMap(int repeat, std::uint64_t seed)>& run, int times,
    std::uint64_t base_seed);

}  // namespace gounsafe
