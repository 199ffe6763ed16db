#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gounsafe/cfg.hpp"
#include "gounsafe/tensor.hpp"

namespace gounsafe {

// A finite-category label missing from the manifest means the encoder and
// the corpus disagree about the language subset; nothing sensible can be
// encoded, so this is fatal rather than an `other` fallback.
class UnknownFiniteLabel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The fixed label lists of the five finite categories. Shipped as a
// versioned file so the count of finite labels is data, not code; the
// reference manifest has 82 entries.
struct FiniteManifest {
    int version = 1;
    std::vector<std::string> statement_types;
    std::vector<std::string> operators;
    std::vector<std::string> variable_types;
    std::vector<std::string> self_refs;
    std::vector<std::string> builtins;

    int n_finite() const;
    std::uint64_t hash() const;
    std::string to_json() const;
    static FiniteManifest from_json(const std::string& text);
    static const FiniteManifest& builtin();

    bool operator==(const FiniteManifest&) const = default;
};

enum class FeatureSubset { All, None, OnlyVars, OnlyTypes, OnlyFuncs, OnlyPkgs };

const char* feature_subset_name(FeatureSubset s);
FeatureSubset feature_subset_from_name(const std::string& name);
std::vector<FeatureSubset> feature_subsets();

// Whether a label category survives under the subset. Statement types and
// self references always do; each Only* subset restores exactly one more
// family on top of that baseline.
bool category_kept(FeatureSubset s, LabelCategory c);
bool keeps_variable_vertices(FeatureSubset s);

// Frozen label-to-index assignment: the five finite blocks in manifest
// order, then one block of k slots plus an `other` slot for each of the
// four infinite categories (datatypes, functions, packages, variable
// names), giving n = 4*(k+1) + n_finite.
struct LabelVocabulary {
    FiniteManifest finite;
    int k = 127;
    std::vector<std::string> datatypes;
    std::vector<std::string> functions;
    std::vector<std::string> packages;
    std::vector<std::string> variable_names;

    int n() const { return 4 * (k + 1) + finite.n_finite(); }
    int index_of(const Label& label) const;
    std::uint64_t hash() const;
    std::string to_json() const;
    static LabelVocabulary from_json(const std::string& text);
};

// Selects the k most frequent labels per infinite category, counting one
// occurrence per vertex; ties break lexicographically. Finite categories
// come from the builtin manifest in full.
LabelVocabulary build_vocabulary(const std::vector<const EnrichedCfg*>& training_graphs,
                                 int k = 127);
LabelVocabulary build_vocabulary(const std::vector<EnrichedCfg>& training_graphs, int k = 127);

struct EncodedInstance {
    int n = 0;
    int num_vertices = 0;
    std::vector<std::uint8_t> features;  // row-major num_vertices x n, 0/1
    std::array<std::vector<std::pair<int, int>>, kEdgeKindCount> edges;
    int usage_vertex = -1;
    std::array<double, 3> context_onehot{};
    int gold_what = -1;
    int gold_why = -1;

    std::uint8_t at(int row, int col) const { return features[row * n + col]; }
    Tensor feature_tensor() const;
    std::string to_json() const;
    static EncodedInstance from_json(const std::string& text);
};

// Encodes one graph for one of its usage sites. The three-argument form
// takes the graph's first usage; the explicit form takes a statement
// vertex id from the unmasked graph.
EncodedInstance encode_graph(const EnrichedCfg& cfg, const LabelVocabulary& vocab,
                             FeatureSubset mask = FeatureSubset::All);
EncodedInstance encode_graph(const EnrichedCfg& cfg, int usage_vertex,
                             const LabelVocabulary& vocab,
                             FeatureSubset mask = FeatureSubset::All);

}  // namespace gounsafe
