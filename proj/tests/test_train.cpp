#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "gounsafe/train.hpp"
#include "synthetic.hpp"

using namespace gounsafe;
using namespace gounsafe_test;

namespace {

Tensor row_tensor(const std::vector<double>& values) {
    return Tensor({1, values.size()}, values);
}

double tape_joint_loss(const Tensor& lw, const Tensor& ly, int gw, int gy) {
    Tape tape;
    ValueId loss = joint_loss(tape, tape.constant(lw), tape.constant(ly), gw, gy);
    return tape.value(loss).item();
}

std::vector<std::pair<int, int>> synthetic_labels(const std::vector<int>& class_counts) {
    std::vector<std::pair<int, int>> labels;
    for (int c = 0; c < static_cast<int>(class_counts.size()); ++c)
        for (int i = 0; i < class_counts[c]; ++i) labels.emplace_back(c / 2, c % 2);
    return labels;
}

double fold_chi_square(const FoldPlan& plan, const std::vector<std::pair<int, int>>& labels) {
    std::map<std::pair<int, int>, int> global;
    for (const auto& label : labels) ++global[label];
    double stat = 0.0;
    for (const auto& fold : plan.folds) {
        std::map<std::pair<int, int>, int> local;
        for (int id : fold) ++local[labels[id]];
        for (const auto& [label, total] : global) {
            double expected =
                static_cast<double>(total) * fold.size() / static_cast<double>(labels.size());
            double observed = local.count(label) ? local[label] : 0;
            stat += (observed - expected) * (observed - expected) / expected;
        }
    }
    return stat;
}

}  // namespace

TEST_CASE("joint loss matches hand-computed values") {
    Tensor uniform7 = row_tensor(std::vector<double>(7, 0.0));
    Tensor uniform11 = row_tensor(std::vector<double>(11, 0.0));
    CHECK(tape_joint_loss(uniform7, uniform11, 3, 5) ==
          doctest::Approx(std::log(7.0) + std::log(11.0)).epsilon(1e-12));
    CHECK(joint_loss_value(uniform7, uniform11, 0, 0) ==
          doctest::Approx(std::log(7.0) + std::log(11.0)).epsilon(1e-12));

    Tensor sharp_what = row_tensor({60.0, 0.0, 0.0});
    Tensor sharp_why = row_tensor({0.0, 60.0});
    CHECK(tape_joint_loss(sharp_what, sharp_why, 0, 1) == doctest::Approx(0.0).epsilon(1e-12));

    Tensor lw = row_tensor({0.3, -1.2, 0.7});
    Tensor ly = row_tensor({0.1, 0.4});
    CHECK(tape_joint_loss(lw, ly, 2, 0) ==
          doctest::Approx(joint_loss_value(lw, ly, 2, 0)).epsilon(1e-12));

    // Relabeling classes consistently in logits and gold leaves the loss alone.
    Tensor lw_swapped = row_tensor({0.7, -1.2, 0.3});
    CHECK(joint_loss_value(lw, ly, 2, 1) ==
          doctest::Approx(joint_loss_value(lw_swapped, ly, 0, 1)).epsilon(1e-12));

    CHECK_THROWS_AS(joint_loss_value(lw, ly, 3, 0), std::invalid_argument);
    CHECK_THROWS_AS(joint_loss_value(lw, ly, 0, -1), std::invalid_argument);
}

TEST_CASE("train defaults match the protocol") {
    TrainOptions options;
    CHECK(options.max_epochs == 1000);
    CHECK(options.patience == 100);
    CHECK(options.batch_size == 0);
    CHECK(options.adam.lr == doctest::Approx(0.001));
}

TEST_CASE("every variant overfits the separable corpus") {
    std::vector<EncodedInstance> corpus = separable_corpus(50, 4, 2, 91);
    for (ModelVariant variant : model_variants()) {
        CAPTURE(model_variant_name(variant));
        ModelConfig config = separable_config(variant, 4, 2);
        TrainOptions options;
        options.max_epochs = 150;
        options.adam.lr = 0.02;
        options.seed = 5;
        TrainRunResult result = train(config, corpus, corpus, options);
        CHECK(result.epochs_run <= options.max_epochs);
        CHECK(joint_top1_accuracy(config, result.best_params, corpus) >= 0.95);
    }
}

TEST_CASE("patience stops training once validation only degrades") {
    std::vector<EncodedInstance> train_set = separable_corpus(12, 4, 2, 17);
    std::vector<EncodedInstance> val_set = separable_corpus(8, 4, 2, 18);
    for (EncodedInstance& inst : val_set) {
        inst.gold_what = (inst.gold_what + 1) % 4;
        inst.gold_why = 1 - inst.gold_why;
    }
    ModelConfig config = separable_config(ModelVariant::Gin, 4, 2);
    TrainOptions options;
    options.max_epochs = 400;
    options.adam.lr = 0.05;
    options.seed = 3;
    TrainRunResult result = train(config, train_set, val_set, options);
    CHECK(result.best_epoch <= 25);
    CHECK(result.epochs_run == result.best_epoch + options.patience);
    CHECK(result.epochs_run < options.max_epochs);
    CHECK(result.val_loss == doctest::Approx(result.val_losses[result.best_epoch - 1]));
}

TEST_CASE("fixed seed reproduces a run bit for bit") {
    std::vector<EncodedInstance> corpus = separable_corpus(16, 4, 2, 33);
    std::vector<EncodedInstance> val = separable_corpus(8, 4, 2, 34);
    ModelConfig config = separable_config(ModelVariant::DeepSets, 4, 2);
    config.dropout = 0.5;
    config.mlp_depth = 2;
    TrainOptions options;
    options.max_epochs = 30;
    options.seed = 77;
    TrainRunResult a = train(config, corpus, val, options);
    TrainRunResult b = train(config, corpus, val, options);
    CHECK(a.epochs_run == b.epochs_run);
    CHECK(a.best_epoch == b.best_epoch);
    CHECK(a.val_loss == b.val_loss);
    CHECK(a.train_losses == b.train_losses);
    for (const auto& [name, tensor] : a.best_params.tensors) {
        const Tensor& other = b.best_params.tensors.at(name);
        REQUIRE(tensor.size() == other.size());
        for (std::size_t i = 0; i < tensor.size(); ++i) CHECK(tensor.at(i) == other.at(i));
    }

    options.seed = 78;
    TrainRunResult c = train(config, corpus, val, options);
    CHECK(a.val_loss != c.val_loss);
}

TEST_CASE("divergence reports the offending epoch") {
    std::vector<EncodedInstance> corpus = separable_corpus(6, 4, 2, 11);
    corpus[2].context_onehot[0] = std::numeric_limits<double>::quiet_NaN();
    ModelConfig config = separable_config(ModelVariant::Gin, 4, 2);
    TrainOptions options;
    options.max_epochs = 5;
    options.seed = 1;
    try {
        train(config, corpus, corpus, options);
        FAIL("expected Diverged");
    } catch (const Diverged& e) {
        CHECK(e.epoch() == 1);
    }
}

TEST_CASE("full-batch loss is non-increasing on a tiny set") {
    std::vector<EncodedInstance> corpus = separable_corpus(5, 2, 2, 21);
    ModelConfig config = separable_config(ModelVariant::Gin, 2, 2);
    TrainOptions options;
    options.max_epochs = 60;
    options.patience = 60;
    options.adam.lr = 0.001;
    options.seed = 9;
    TrainRunResult result = train(config, corpus, corpus, options);
    REQUIRE(result.epochs_run >= 50);
    for (int e = 1; e < result.epochs_run; ++e)
        CHECK(result.train_losses[e] <= result.train_losses[e - 1] + 1e-9);
}

TEST_CASE("mini-batch training stays deterministic") {
    std::vector<EncodedInstance> corpus = separable_corpus(10, 4, 2, 41);
    std::vector<EncodedInstance> val = separable_corpus(4, 4, 2, 42);
    ModelConfig config = separable_config(ModelVariant::Gin, 4, 2);
    TrainOptions options;
    options.max_epochs = 8;
    options.batch_size = 3;
    options.seed = 13;
    TrainRunResult a = train(config, corpus, val, options);
    TrainRunResult b = train(config, corpus, val, options);
    CHECK(a.epochs_run == 8);
    CHECK(a.train_losses == b.train_losses);
    for (double loss : a.train_losses) CHECK(std::isfinite(loss));
}

TEST_CASE("train rejects bad inputs") {
    std::vector<EncodedInstance> corpus = separable_corpus(6, 4, 2, 51);
    ModelConfig config = separable_config(ModelVariant::Gin, 4, 2);
    TrainOptions options;
    CHECK_THROWS_AS(train(config, {}, corpus, options), std::invalid_argument);
    CHECK_THROWS_AS(train(config, corpus, {}, options), std::invalid_argument);

    std::vector<EncodedInstance> unlabeled = corpus;
    unlabeled[3].gold_what = -1;
    CHECK_THROWS_AS(train(config, unlabeled, corpus, options), std::invalid_argument);
    unlabeled = corpus;
    unlabeled[0].gold_why = 2;
    CHECK_THROWS_AS(train(config, unlabeled, corpus, options), std::invalid_argument);

    TrainOptions bad;
    bad.max_epochs = 0;
    CHECK_THROWS_AS(train(config, corpus, corpus, bad), std::invalid_argument);

    ModelParams params;
    {
        std::mt19937_64 rng(1);
        params = init_params(config, rng);
    }
    CHECK_THROWS_AS(dataset_loss(config, params, {}), std::invalid_argument);
    CHECK_THROWS_AS(joint_top1_accuracy(config, params, {}), std::invalid_argument);
}

TEST_CASE("make_folds deals two balanced classes evenly") {
    std::vector<std::pair<int, int>> labels = synthetic_labels({10, 10});
    FoldPlan plan = make_folds(labels, 4);
    REQUIRE(plan.folds.size() == 10);
    std::set<int> seen;
    for (const auto& fold : plan.folds) {
        REQUIRE(fold.size() == 2);
        std::set<std::pair<int, int>> fold_labels;
        for (int id : fold) {
            CHECK(!seen.count(id));
            seen.insert(id);
            fold_labels.insert(labels[id]);
        }
        CHECK(fold_labels.size() == 2);
    }
    CHECK(seen.size() == labels.size());
}

TEST_CASE("a three-member class lands in three distinct folds") {
    std::vector<std::pair<int, int>> labels = synthetic_labels({27, 3});
    FoldPlan plan = make_folds(labels, 8);
    std::set<int> rare_folds;
    for (int f = 0; f < 10; ++f) {
        CHECK(plan.folds[f].size() == 3);
        for (int id : plan.folds[f])
            if (labels[id] == std::pair<int, int>{0, 1}) rare_folds.insert(f);
    }
    CHECK(rare_folds.size() == 3);
}

TEST_CASE("make_folds needs ten instances") {
    CHECK_THROWS_AS(make_folds(synthetic_labels({9}), 1), TooFewInstances);
    FoldPlan plan = make_folds(synthetic_labels({10}), 1);
    for (const auto& fold : plan.folds) CHECK(fold.size() == 1);
}

TEST_CASE("fold split carves a stratified validation slice") {
    std::vector<std::pair<int, int>> labels = synthetic_labels({50, 50, 50, 50, 50, 50, 50, 50});
    FoldPlan plan = make_folds(labels, 6);
    for (const auto& fold : plan.folds) CHECK(fold.size() == 40);

    FoldSplit split = fold_split(plan, labels, 0, 99);
    CHECK(split.test == plan.folds[0]);
    CHECK(split.validation.size() == 36);
    CHECK(split.train.size() == 324);

    std::set<int> all;
    for (int id : split.train) all.insert(id);
    for (int id : split.validation) all.insert(id);
    for (int id : split.test) all.insert(id);
    CHECK(all.size() == labels.size());

    std::map<std::pair<int, int>, int> val_hist;
    for (int id : split.validation) ++val_hist[labels[id]];
    for (const auto& [label, count] : val_hist) {
        CHECK(count >= 4);
        CHECK(count <= 5);
    }

    CHECK_THROWS_AS(fold_split(plan, labels, 10, 99), std::invalid_argument);
    CHECK_THROWS_AS(fold_split(plan, labels, -1, 99), std::invalid_argument);
}

TEST_CASE("fold histograms track the global label distribution") {
    std::vector<std::pair<int, int>> labels =
        synthetic_labels({120, 90, 60, 50, 30, 25, 15, 10});
    FoldPlan plan = make_folds(labels, 2024);
    std::size_t total = 0;
    for (const auto& fold : plan.folds) total += fold.size();
    CHECK(total == labels.size());
    CHECK(fold_chi_square(plan, labels) < 30.0);
}

TEST_CASE("hyperband schedule reproduces the hand table") {
    std::vector<HyperbandBracket> table = hyperband_schedule(200, 3);
    REQUIRE(table.size() == 5);
    CHECK(table[0] == HyperbandBracket{4, {{81, 3}, {27, 8}, {9, 23}, {3, 67}, {1, 200}}});
    CHECK(table[1] == HyperbandBracket{3, {{34, 8}, {11, 23}, {3, 67}, {1, 200}}});
    CHECK(table[2] == HyperbandBracket{2, {{15, 23}, {5, 67}, {1, 200}}});
    CHECK(table[3] == HyperbandBracket{1, {{8, 67}, {2, 200}}});
    CHECK(table[4] == HyperbandBracket{0, {{5, 200}}});

    std::vector<HyperbandBracket> exact = hyperband_schedule(81, 3);
    REQUIRE(exact.size() == 5);
    CHECK(exact[0] == HyperbandBracket{4, {{81, 1}, {27, 3}, {9, 9}, {3, 27}, {1, 81}}});
    CHECK(exact[4] == HyperbandBracket{0, {{5, 81}}});

    CHECK_THROWS_AS(hyperband_schedule(0, 3), std::invalid_argument);
    CHECK_THROWS_AS(hyperband_schedule(200, 1), std::invalid_argument);
}

TEST_CASE("hyperband returns the lone config in a singleton space") {
    std::vector<EncodedInstance> corpus = structural_corpus(3);
    ModelConfig only = structural_config(ModelVariant::Gin);
    HyperbandResult result = hyperband([&only](std::mt19937_64&) { return only; }, corpus, corpus,
                                       8, 3, 5);
    CHECK(result.config == only);
    CHECK(result.runs == 6);
    CHECK(result.accuracy >= 0.0);
}

TEST_CASE("hyperband promotes the config that dominates every rung") {
    std::vector<EncodedInstance> corpus = structural_corpus(3);
    ModelConfig graph_config = structural_config(ModelVariant::Gin);
    ModelConfig blind_config = structural_config(ModelVariant::Mlp);
    int draws = 0;
    ConfigSampler sample = [&](std::mt19937_64&) {
        return (draws++ % 2 == 0) ? blind_config : graph_config;
    };
    TrainOptions base;
    base.adam.lr = 0.05;
    HyperbandResult result = hyperband(sample, corpus, corpus, 8, 3, 20, base);
    CHECK(result.config == graph_config);
    CHECK(result.accuracy > 0.25);
}

TEST_CASE("table sampler stays inside the tuning grid") {
    std::mt19937_64 rng(123);
    for (int i = 0; i < 200; ++i) {
        ModelConfig config = sample_table_config(ModelVariant::Gin, 594, 13, 11, rng);
        CHECK(config.conv_depth >= 2);
        CHECK(config.conv_depth <= 6);
        CHECK(config.mlp_depth >= 1);
        CHECK(config.mlp_depth <= 3);
        CHECK(config.conv_width % 32 == 0);
        CHECK(config.conv_width <= 512);
        CHECK(config.mlp_width % 32 == 0);
        CHECK(config.mlp_width <= 512);
        CHECK((config.dropout == 0.0 || config.dropout == 0.5));
        CHECK_NOTHROW(config.validate());
    }
    std::mt19937_64 rng_a(7), rng_b(7);
    CHECK(sample_table_config(ModelVariant::Wl2Gnn, 100, 3, 2, rng_a) ==
          sample_table_config(ModelVariant::Wl2Gnn, 100, 3, 2, rng_b));
}

TEST_CASE("repeat_and_aggregate reports mean and spread per metric") {
    std::vector<std::uint64_t> seeds;
    auto run = [&seeds](int repeat, std::uint64_t seed) {
        seeds.push_back(seed);
        MetricMap m;
        m["accuracy"] = 0.8 + 0.1 * repeat;
        m["set_size"] = 2.0;
        return m;
    };
    auto stats = repeat_and_aggregate(run, 3, 40);
    CHECK(stats.at("accuracy").mean == doctest::Approx(0.9));
    CHECK(stats.at("accuracy").std_dev == doctest::Approx(0.0816496580927726));
    CHECK(stats.at("set_size").mean == doctest::Approx(2.0));
    CHECK(stats.at("set_size").std_dev == doctest::Approx(0.0));
    REQUIRE(seeds.size() == 3);
    CHECK(seeds[0] == 40);
    CHECK(seeds[1] == (40 ^ 1));
    CHECK(seeds[2] == (40 ^ 2));

    AggregateStats forward = aggregate({0.8, 0.9, 1.0});
    AggregateStats shuffled = aggregate({1.0, 0.8, 0.9});
    CHECK(forward.mean == shuffled.mean);
    CHECK(forward.std_dev == shuffled.std_dev);
    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
    CHECK_THROWS_AS(repeat_and_aggregate([](int, std::uint64_t) { return MetricMap{}; }, 0, 1),
                    std::invalid_argument);
}
