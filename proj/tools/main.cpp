#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "gounsafe/pipeline.hpp"

namespace {

using namespace gounsafe;

const std::vector<std::string> kVariants = {"mlp", "deepsets", "gin", "wl2"};
const std::vector<std::string> kSubsets = {"all",        "none",       "only-vars",
                                           "only-types", "only-funcs", "only-pkgs"};
const std::vector<std::string> kFormats = {"text", "jsonl"};

void add_common(CLI::App* cmd, CommonOptions& common) {
    cmd->add_option("--out", common.out_dir, "directory for generated artifacts");
    cmd->add_option("--format", common.format, "stdout format")
        ->check(CLI::IsMember(kFormats));
    cmd->add_option("--seed", common.seed, "root random seed");
    cmd->add_flag("--include-vendored", common.include_vendored,
                  "also scan vendor/ directories");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"locate, classify, and audit unsafe usages in Go projects"};
    app.require_subcommand(1);

    ExtractOptions extract;
    std::string extract_subset = "all";
    CLI::App* cmd_ex = app.add_subcommand("extract", "inventory usages and dump encoded graphs");
    cmd_ex->add_option("project", extract.project, "Go project root")->required();
    cmd_ex->add_option("--vocabulary", extract.vocabulary_path,
                       "encode with this vocabulary instead of building one");
    cmd_ex->add_option("--feature-subset", extract_subset, "label families to encode")
        ->check(CLI::IsMember(kSubsets));
    cmd_ex->add_option("--k", extract.vocabulary_k, "slots per infinite label category");
    add_common(cmd_ex, extract.common);

    TrainCmdOptions train;
    std::string train_variant = "wl2";
    std::string train_subset = "all";
    CLI::App* cmd_tr = app.add_subcommand("train", "train one model and write its bundle");
    cmd_tr->add_option("dataset", train.dataset, "labeled records, one JSON object per line")
        ->required();
    cmd_tr->add_option("--project", train.project, "Go project root")->required();
    cmd_tr->add_option("--variant", train_variant, "model variant")
        ->check(CLI::IsMember(kVariants));
    cmd_tr->add_option("--feature-subset", train_subset, "label families to encode")
        ->check(CLI::IsMember(kSubsets));
    cmd_tr->add_option("--config", train.config_path, "tuned model configuration to adopt");
    cmd_tr->add_option("--epsilon", train.epsilon, "conformal miscoverage level");
    cmd_tr->add_option("--repeats", train.repeats, "training repetitions");
    cmd_tr->add_option("--max-epochs", train.max_epochs, "epoch budget per repetition");
    cmd_tr->add_option("--k", train.vocabulary_k, "slots per infinite label category");
    add_common(cmd_tr, train.common);

    TuneCmdOptions tune;
    std::string tune_variant = "wl2";
    std::string tune_subset = "all";
    CLI::App* cmd_tu = app.add_subcommand("tune", "search the configuration grid");
    cmd_tu->add_option("dataset", tune.dataset, "labeled records, one JSON object per line")
        ->required();
    cmd_tu->add_option("--project", tune.project, "Go project root")->required();
    cmd_tu->add_option("--variant", tune_variant, "model variant")
        ->check(CLI::IsMember(kVariants));
    cmd_tu->add_option("--feature-subset", tune_subset, "label families to encode")
        ->check(CLI::IsMember(kSubsets));
    cmd_tu->add_option("--budget", tune.budget, "epoch budget per configuration");
    cmd_tu->add_option("--eta", tune.eta, "halving rate");
    cmd_tu->add_option("--k", tune.vocabulary_k, "slots per infinite label category");
    add_common(cmd_tu, tune.common);

    CalibrateCmdOptions calibrate;
    CLI::App* cmd_ca = app.add_subcommand("calibrate", "refit temperatures and thresholds");
    cmd_ca->add_option("dataset", calibrate.dataset, "labeled records, one JSON object per line")
        ->required();
    cmd_ca->add_option("--project", calibrate.project, "Go project root")->required();
    cmd_ca->add_option("--model", calibrate.model_dir, "model bundle directory")->required();
    cmd_ca->add_option("--epsilon", calibrate.epsilon, "conformal miscoverage level");
    add_common(cmd_ca, calibrate.common);

    EvaluateCmdOptions evaluate;
    std::string eval_variant = "wl2";
    std::string eval_subset = "all";
    CLI::App* cmd_ev = app.add_subcommand("evaluate", "run the cross-validation protocol");
    cmd_ev->add_option("dataset", evaluate.dataset, "labeled records, one JSON object per line")
        ->required();
    cmd_ev->add_option("--project", evaluate.project, "Go project root")->required();
    cmd_ev->add_option("--variant", eval_variant, "model variant")
        ->check(CLI::IsMember(kVariants));
    cmd_ev->add_option("--feature-subset", eval_subset, "label families to encode")
        ->check(CLI::IsMember(kSubsets));
    cmd_ev->add_option("--epsilon", evaluate.epsilon, "conformal miscoverage level");
    cmd_ev->add_option("--folds", evaluate.folds, "test folds to evaluate");
    cmd_ev->add_option("--repeats", evaluate.repeats, "training repetitions per fold");
    cmd_ev->add_option("--max-epochs", evaluate.max_epochs, "epoch budget per repetition");
    cmd_ev->add_option("--k", evaluate.vocabulary_k, "slots per infinite label category");
    cmd_ev->add_flag("--ablation", evaluate.ablation,
                     "run every variant against every feature subset");
    cmd_ev->add_flag("--stretch-targets", evaluate.stretch_targets,
                     "print full-corpus reference targets next to the results");
    add_common(cmd_ev, evaluate.common);

    PredictCmdOptions predict;
    CLI::App* cmd_pr = app.add_subcommand("predict", "report classified usages for a project");
    cmd_pr->add_option("project", predict.project, "Go project root")->required();
    cmd_pr->add_option("--model", predict.model_dir, "model bundle directory")->required();
    add_common(cmd_pr, predict.common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (cmd_ex->parsed()) {
            extract.subset = feature_subset_from_name(extract_subset);
            cmd_extract(extract, std::cout, std::cerr);
        } else if (cmd_tr->parsed()) {
            train.variant = model_variant_from_name(train_variant);
            train.subset = feature_subset_from_name(train_subset);
            cmd_train(train, std::cout, std::cerr);
        } else if (cmd_tu->parsed()) {
            tune.variant = model_variant_from_name(tune_variant);
            tune.subset = feature_subset_from_name(tune_subset);
            cmd_tune(tune, std::cout, std::cerr);
        } else if (cmd_ca->parsed()) {
            cmd_calibrate(calibrate, std::cout, std::cerr);
        } else if (cmd_ev->parsed()) {
            evaluate.variant = model_variant_from_name(eval_variant);
            evaluate.subset = feature_subset_from_name(eval_subset);
            cmd_evaluate(evaluate, std::cout, std::cerr);
        } else if (cmd_pr->parsed()) {
            cmd_predict(predict, std::cout, std::cerr);
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
