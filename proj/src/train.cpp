#include "gounsafe/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gounsafe {
namespace {

void check_labels(const std::vector<EncodedInstance>& data, const ModelConfig& config,
                  const char* which) {
    for (const EncodedInstance& inst : data) {
        if (inst.gold_what < 0 || inst.gold_what >= config.what_classes || inst.gold_why < 0 ||
            inst.gold_why >= config.why_classes)
            throw std::invalid_argument(std::string(which) +
                                        " set contains an instance without valid gold labels");
    }
}

int argmax_col(const Tensor& row) {
    int best = 0;
    for (std::size_t c = 1; c < row.cols(); ++c)
        if (row.at(c) > row.at(best)) best = static_cast<int>(c);
    return best;
}

double head_nll(const Tensor& logits, int gold) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits.at(c));
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) sum += std::exp(logits.at(c) - mx);
    return mx + std::log(sum) - logits.at(gold);
}

// Deals ids into `buckets` groups, stratified by joint label. Groups are
// visited in sorted label order, each shuffled, and members assigned by a
// cursor that keeps rolling across groups so bucket sizes stay balanced and
// a class with m < buckets members lands in m distinct buckets.
std::vector<std::vector<int>> stratified_deal(const std::vector<int>& ids,
                                              const std::vector<std::pair<int, int>>& labels,
                                              int buckets, std::mt19937_64& rng) {
    std::map<std::pair<int, int>, std::vector<int>> groups;
    for (int id : ids) groups[labels[id]].push_back(id);
    std::vector<std::vector<int>> out(buckets);
    int cursor = 0;
    for (auto& [label, members] : groups) {
        std::shuffle(members.begin(), members.end(), rng);
        for (int id : members) {
            out[cursor % buckets].push_back(id);
            ++cursor;
        }
    }
    for (auto& bucket : out) std::sort(bucket.begin(), bucket.end());
    return out;
}

int ipow(int base, int exp) {
    int out = 1;
    for (int i = 0; i < exp; ++i) out *= base;
    return out;
}

}  // namespace

ValueId joint_loss(Tape& tape, ValueId logits_what, ValueId logits_why, int gold_what,
                   int gold_why) {
    return tape.add(tape.cross_entropy(logits_what, {gold_what}),
                    tape.cross_entropy(logits_why, {gold_why}));
}

double joint_loss_value(const Tensor& logits_what, const Tensor& logits_why, int gold_what,
                        int gold_why) {
    if (logits_what.rows() != 1 || logits_why.rows() != 1)
        throw std::invalid_argument("joint_loss_value expects single-row logits");
    if (gold_what < 0 || gold_what >= static_cast<int>(logits_what.cols()) || gold_why < 0 ||
        gold_why >= static_cast<int>(logits_why.cols()))
        throw std::invalid_argument("gold label out of range");
    return head_nll(logits_what, gold_what) + head_nll(logits_why, gold_why);
}

TrainRunResult train(const ModelConfig& config, const std::vector<EncodedInstance>& train_set,
                     const std::vector<EncodedInstance>& val_set, const TrainOptions& options) {
    config.validate();
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train requires nonempty train and validation sets");
    if (options.max_epochs < 1 || options.patience < 1 || options.batch_size < 0)
        throw std::invalid_argument("train options out of range");
    check_labels(train_set, config, "train");
    check_labels(val_set, config, "validation");

    std::mt19937_64 rng(options.seed);
    ModelParams params = init_params(config, rng);
    Adam optimizer(options.adam);

    TrainRunResult result;
    result.seed = options.seed;
    ModelParams best = params;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch =
        options.batch_size == 0 ? train_set.size()
                                : std::min<std::size_t>(options.batch_size, train_set.size());

    int stale = 0;
    for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
        if (batch < train_set.size()) std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            std::size_t take = std::min(batch, order.size() - done);
            Tape tape;
            Forward fwd{&tape, &config, &params, true, &rng};
            ValueId total = -1;
            for (std::size_t i = done; i < done + take; ++i) {
                const EncodedInstance& inst = train_set[order[i]];
                auto [lw, ly] = classify_on_tape(fwd, inst);
                ValueId loss = joint_loss(tape, lw, ly, inst.gold_what, inst.gold_why);
                total = (total < 0) ? loss : tape.add(total, loss);
            }
            ValueId mean = tape.scale(total, 1.0 / static_cast<double>(take));
            tape.backward(mean);
            epoch_loss += tape.value(mean).item() * static_cast<double>(take);
            ParamMap grads;
            for (auto& [name, tensor] : params.tensors) grads[name] = tape.grad_of(&tensor);
            optimizer.step(params.tensors, grads);
            done += take;
        }
        epoch_loss /= static_cast<double>(train_set.size());
        double val_loss = dataset_loss(config, params, val_set);

        result.train_losses.push_back(epoch_loss);
        result.val_losses.push_back(val_loss);
        result.epochs_run = epoch;
        if (!std::isfinite(epoch_loss) || !std::isfinite(val_loss))
            throw Diverged(epoch, "non-finite loss at epoch " + std::to_string(epoch));

        if (val_loss < best_val) {
            best_val = val_loss;
            best = params;
            result.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= options.patience) {
            break;
        }
    }

    result.best_params = std::move(best);
    result.val_loss = best_val;
    return result;
}

double dataset_loss(const ModelConfig& config, const ModelParams& params,
                    const std::vector<EncodedInstance>& data) {
    if (data.empty()) throw std::invalid_argument("dataset_loss requires at least one instance");
    double total = 0.0;
    for (const EncodedInstance& inst : data) {
        Logits out = classify(inst, params, config);
        total += joint_loss_value(out.what, out.why, inst.gold_what, inst.gold_why);
    }
    return total / static_cast<double>(data.size());
}

double joint_top1_accuracy(const ModelConfig& config, const ModelParams& params,
                           const std::vector<EncodedInstance>& data) {
    if (data.empty())
        throw std::invalid_argument("joint_top1_accuracy requires at least one instance");
    int correct = 0;
    for (const EncodedInstance& inst : data) {
        Logits out = classify(inst, params, config);
        if (argmax_col(out.what) == inst.gold_what && argmax_col(out.why) == inst.gold_why)
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

FoldPlan make_folds(const std::vector<std::pair<int, int>>& joint_labels, std::uint64_t seed) {
    constexpr int kFolds = 10;
    if (static_cast<int>(joint_labels.size()) < kFolds)
        throw TooFewInstances("need at least 10 labeled instances for 10 folds, have " +
                              std::to_string(joint_labels.size()));
    std::vector<int> ids(joint_labels.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::mt19937_64 rng(seed);
    FoldPlan plan;
    plan.folds = stratified_deal(ids, joint_labels, kFolds, rng);
    return plan;
}

FoldSplit fold_split(const FoldPlan& plan, const std::vector<std::pair<int, int>>& joint_labels,
                     int test_fold, std::uint64_t seed) {
    if (test_fold < 0 || test_fold >= static_cast<int>(plan.folds.size()))
        throw std::invalid_argument("test fold index out of range");
    FoldSplit split;
    split.test = plan.folds[test_fold];
    std::vector<int> rest;
    for (int f = 0; f < static_cast<int>(plan.folds.size()); ++f) {
        if (f == test_fold) continue;
        rest.insert(rest.end(), plan.folds[f].begin(), plan.folds[f].end());
    }
    std::mt19937_64 rng(seed);
    std::vector<std::vector<int>> tenths = stratified_deal(rest, joint_labels, 10, rng);
    split.validation = tenths[0];
    for (int b = 1; b < 10; ++b)
        split.train.insert(split.train.end(), tenths[b].begin(), tenths[b].end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

std::vector<HyperbandBracket> hyperband_schedule(int max_epochs, int eta) {
    if (max_epochs < 1 || eta < 2) throw std::invalid_argument("hyperband schedule out of range");
    int s_max = 0;
    while (ipow(eta, s_max + 1) <= max_epochs) ++s_max;
    std::vector<HyperbandBracket> brackets;
    for (int s = s_max; s >= 0; --s) {
        HyperbandBracket bracket;
        bracket.bracket = s;
        int n = ((s_max + 1) * ipow(eta, s) + s) / (s + 1);
        for (int i = 0; i <= s; ++i) {
            HyperbandRung rung;
            rung.configs = n / ipow(eta, i);
            int shrink = ipow(eta, s - i);
            rung.epochs = (max_epochs + shrink - 1) / shrink;
            bracket.rungs.push_back(rung);
        }
        brackets.push_back(bracket);
    }
    return brackets;
}

HyperbandResult hyperband(const ConfigSampler& sample,
                          const std::vector<EncodedInstance>& train_set,
                          const std::vector<EncodedInstance>& val_set, int max_epochs, int eta,
                          std::uint64_t seed, const TrainOptions& base) {
    std::vector<HyperbandBracket> schedule = hyperband_schedule(max_epochs, eta);
    std::mt19937_64 rng(seed);
    HyperbandResult best;
    best.accuracy = -1.0;
    for (const HyperbandBracket& bracket : schedule) {
        std::vector<ModelConfig> configs;
        for (int i = 0; i < bracket.rungs.front().configs; ++i) configs.push_back(sample(rng));
        for (std::size_t ri = 0; ri < bracket.rungs.size(); ++ri) {
            const HyperbandRung& rung = bracket.rungs[ri];
            if (static_cast<int>(configs.size()) > rung.configs) configs.resize(rung.configs);
            std::vector<std::pair<double, int>> scored;
            for (std::size_t ci = 0; ci < configs.size(); ++ci) {
                TrainOptions options = base;
                options.max_epochs = rung.epochs;
                options.seed = seed ^ (static_cast<std::uint64_t>(bracket.bracket) * 1000003u +
                                       ri * 1009u + ci + 1u);
                TrainRunResult run = train(configs[ci], train_set, val_set, options);
                double acc = joint_top1_accuracy(configs[ci], run.best_params, val_set);
                ++best.runs;
                scored.emplace_back(acc, static_cast<int>(ci));
                if (acc > best.accuracy) {
                    best.accuracy = acc;
                    best.config = configs[ci];
                }
            }
            std::stable_sort(scored.begin(), scored.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            std::vector<ModelConfig> survivors;
            for (const auto& [acc, ci] : scored) survivors.push_back(configs[ci]);
            configs = std::move(survivors);
        }
    }
    return best;
}

ModelConfig sample_table_config(ModelVariant variant, int input_dim, int what_classes,
                                int why_classes, std::mt19937_64& rng) {
    auto pick = [&rng](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };
    ModelConfig config;
    config.variant = variant;
    config.input_dim = input_dim;
    config.what_classes = what_classes;
    config.why_classes = why_classes;
    config.conv_depth = pick(2, 6);
    config.mlp_depth = pick(1, 3);
    config.conv_width = 32 * pick(1, 16);
    config.mlp_width = 32 * pick(1, 16);
    const Activation acts[] = {Activation::Relu, Activation::Sigmoid, Activation::Tanh,
                               Activation::Elu};
    config.conv_activation = acts[pick(0, 3)];
    config.mlp_activation = acts[pick(0, 3)];
    const auto pools = pooling_methods();
    config.pooling = pools[pick(0, static_cast<int>(pools.size()) - 1)];
    config.batch_norm = pick(0, 1) == 1;
    config.dropout = pick(0, 1) == 1 ? 0.5 : 0.0;
    config.validate();
    return config;
}

AggregateStats aggregate(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("aggregate requires at least one value");
    AggregateStats stats;
    for (double v : values) stats.mean += v;
    stats.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - stats.mean) * (v - stats.mean);
    stats.std_dev = std::sqrt(var / static_cast<double>(values.size()));
    return stats;
}

std::map<std::string, AggregateStats> repeat_and_aggregate(
    const std::function<MetricMap(int repeat, std::uint64_t seed)>& run, int times,
    std::uint64_t base_seed) {
    if (times < 1) throw std::invalid_argument("repeat count must be positive");
    std::map<std::string, std::vector<double>> collected;
    for (int r = 0; r < times; ++r) {
        MetricMap metrics = run(r, base_seed ^ static_cast<std::uint64_t>(r));
        for (const auto& [name, value] : metrics) collected[name].push_back(value);
    }
    std::map<std::string, AggregateStats> out;
    for (const auto& [name, values] : collected) {
        if (static_cast<int>(values.size()) != times)
            throw std::invalid_argument("metric " + name + " missing from some repeats");
        out[name] = aggregate(values);
    }
    return out;
}

}  // namespace gounsafe
