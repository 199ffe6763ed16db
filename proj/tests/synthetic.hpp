#pragma once

#include <random>
#include <string>
#include <vector>

#include "gounsafe/evaluation.hpp"
#include "gounsafe/models.hpp"

// Hand-built encoded corpora for exercising the training loop without the
// frontend. The separable corpus codes both labels directly into the usage
// row, so every variant including the single-vertex baseline can fit it.
// The structural corpus keeps the usage row constant and codes the labels
// into the neighborhood, which caps the single-vertex baseline at the
// majority-pair share while graph variants can reach it.

namespace gounsafe_test {

inline gounsafe::EncodedInstance separable_instance(int what, int why, int what_classes,
                                                    int why_classes, std::mt19937_64& rng) {
    gounsafe::EncodedInstance inst;
    const int noise_base = what_classes + why_classes;
    inst.n = noise_base + 6;
    inst.num_vertices = 5;
    inst.features.assign(static_cast<std::size_t>(inst.num_vertices) * inst.n, 0);
    auto set = [&inst](int row, int col) { inst.features[row * inst.n + col] = 1; };
    set(2, what);
    set(2, what_classes + why);
    for (int row = 0; row < inst.num_vertices; ++row) {
        if (row == 2) continue;
        set(row, noise_base + static_cast<int>(rng() % 6));
    }
    inst.edges[0] = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
    inst.edges[3] = {{4, 2}};
    inst.usage_vertex = 2;
    inst.context_onehot = {0.0, 1.0, 0.0};
    inst.gold_what = what;
    inst.gold_why = why;
    return inst;
}

inline std::vector<gounsafe::EncodedInstance> separable_corpus(int count, int what_classes,
                                                               int why_classes,
                                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<gounsafe::EncodedInstance> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        int joint = i % (what_classes * why_classes);
        out.push_back(separable_instance(joint % what_classes, joint / what_classes, what_classes,
                                         why_classes, rng));
    }
    return out;
}

inline gounsafe::ModelConfig separable_config(gounsafe::ModelVariant variant, int what_classes,
                                              int why_classes) {
    gounsafe::ModelConfig config;
    config.variant = variant;
    config.conv_depth = 2;
    config.mlp_depth = 1;
    config.conv_width = 32;
    config.mlp_width = 32;
    config.conv_activation = gounsafe::Activation::Tanh;
    config.mlp_activation = gounsafe::Activation::Tanh;
    config.pooling = gounsafe::Pooling::Sum;
    config.input_dim = what_classes + why_classes + 6;
    config.what_classes = what_classes;
    config.why_classes = why_classes;
    return config;
}

inline gounsafe::EncodedInstance structural_instance(int what, int why) {
    gounsafe::EncodedInstance inst;
    inst.n = 8;
    inst.num_vertices = 4;
    inst.features.assign(static_cast<std::size_t>(inst.num_vertices) * inst.n, 0);
    auto set = [&inst](int row, int col) { inst.features[row * inst.n + col] = 1; };
    set(0, 0);
    set(1, why == 0 ? 3 : 4);
    set(2, 2);
    set(3, 5);
    inst.edges[0].push_back({0, 1});
    inst.edges[0].push_back({3, 1});
    if (what == 1) inst.edges[0].push_back({0, 2});
    inst.usage_vertex = 0;
    inst.context_onehot = {1.0, 0.0, 0.0};
    inst.gold_what = what;
    inst.gold_why = why;
    return inst;
}

inline std::vector<gounsafe::EncodedInstance> structural_corpus(int per_class) {
    std::vector<gounsafe::EncodedInstance> out;
    for (int what = 0; what < 2; ++what)
        for (int why = 0; why < 2; ++why)
            for (int i = 0; i < per_class; ++i) out.push_back(structural_instance(what, why));
    return out;
}

inline gounsafe::ModelConfig structural_config(gounsafe::ModelVariant variant) {
    gounsafe::ModelConfig config;
    config.variant = variant;
    config.conv_depth = 2;
    config.mlp_depth = 1;
    config.conv_width = 32;
    config.mlp_width = 32;
    config.conv_activation = gounsafe::Activation::Tanh;
    config.mlp_activation = gounsafe::Activation::Tanh;
    config.pooling = gounsafe::Pooling::Sum;
    config.input_dim = 8;
    config.what_classes = 2;
    config.why_classes = 2;
    return config;
}

// Graph-level corpus whose WHAT label is coded by a datatype label and
// whose WHY label by a function label, both on the usage statement. Under
// the feature subset that keeps neither family the instances collapse to
// identical encodings, capping any classifier at chance.
inline gounsafe::EnrichedCfg type_separable_graph(int what, int why) {
    using namespace gounsafe;
    EnrichedCfg graph;
    Vertex usage;
    usage.id = 0;
    usage.kind = VertexKind::Statement;
    usage.add_label({LabelCategory::StatementType, "expr"});
    usage.add_label({LabelCategory::Datatype, "T" + std::to_string(what)});
    usage.add_label({LabelCategory::Function, why == 0 ? "alpha" : "beta"});
    Vertex ret;
    ret.id = 1;
    ret.kind = VertexKind::Statement;
    ret.add_label({LabelCategory::StatementType, "return"});
    Vertex var;
    var.id = 2;
    var.kind = VertexKind::Variable;
    var.name = "x";
    var.add_label({LabelCategory::VariableName, "x"});
    graph.vertices = {usage, ret, var};
    graph.edges = {{0, 1, EdgeKind::Flow}, {2, 0, EdgeKind::Use}};
    graph.context_type = CfgContextType::Function;
    return graph;
}

inline std::vector<gounsafe::AblationInstance> type_separable_corpus(int count) {
    std::vector<gounsafe::AblationInstance> out;
    for (int i = 0; i < count; ++i) {
        gounsafe::AblationInstance inst;
        inst.gold_what = i % 4;
        inst.gold_why = (i / 4) % 2;
        inst.graph = type_separable_graph(inst.gold_what, inst.gold_why);
        inst.usage_vertex = 0;
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace gounsafe_test
