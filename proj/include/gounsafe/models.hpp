#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gounsafe/encoder.hpp"
#include "gounsafe/optimizer.hpp"
#include "gounsafe/tape.hpp"
#include "gounsafe/tensor.hpp"

namespace gounsafe {

class VocabularyMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyGraph : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ModelVariant { Mlp, DeepSets, Gin, Wl2Gnn };

const char* model_variant_name(ModelVariant v);
ModelVariant model_variant_from_name(const std::string& name);
const std::array<ModelVariant, 4>& model_variants();

enum class Pooling { Sum, Mean, Max, Min, Softmax };

const char* pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& name);
const std::array<Pooling, 5>& pooling_methods();

// Softmax pooling needs one feature column to act as the weight logit; the
// last convolved column is designated and the choice is written into every
// checkpoint.
inline constexpr const char* kSoftmaxWeightColumn = "last";

struct ModelConfig {
    ModelVariant variant = ModelVariant::Gin;
    int conv_depth = 2;
    int mlp_depth = 1;
    int conv_width = 64;
    int mlp_width = 64;
    Activation conv_activation = Activation::Relu;
    Activation mlp_activation = Activation::Relu;
    Pooling pooling = Pooling::Sum;
    bool batch_norm = false;
    double dropout = 0.0;
    int input_dim = 0;
    int what_classes = 0;
    int why_classes = 0;
    int wl2_radius = 1;
    int wl2_pair_budget = 20000;

    void validate() const;

    // Width of pool()'s output; softmax pooling spends one column on weights.
    int pooled_dim() const;
    // Width of the concatenated vector entering the classification MLP.
    int head_input_dim() const;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

struct ModelParams {
    ParamMap tensors;
    std::map<std::string, BatchNormStats> bn_stats;
    double t_what = 1.0;
    double t_why = 1.0;

    std::string to_json() const;
    static ModelParams from_json(const std::string& text);
};

ModelParams init_params(const ModelConfig& config, std::mt19937_64& rng);

// One forward pass's context. `params` is only written through when
// `training` is set (batch-norm running statistics); `rng` may be null
// unless training with dropout.
struct Forward {
    Tape* tape = nullptr;
    const ModelConfig* config = nullptr;
    ModelParams* params = nullptr;
    bool training = false;
    std::mt19937_64* rng = nullptr;
};

ValueId deepsets_convolve(Forward& f, ValueId x);
ValueId gin_convolve(Forward& f, ValueId x, const EncodedInstance& instance);
ValueId wl2_convolve(Forward& f, ValueId x, const EncodedInstance& instance);

ValueId pool(Tape& tape, ValueId z, Pooling method);

// The ordered-pair universe a 2-WL layer works on: the diagonal plus all
// pairs within `radius` hops in the undirected union of the edge relations.
// Triple t couples pair ps[t] with its two legs qs[t]=(i,k) and rs[t]=(k,j).
struct Wl2PairSet {
    std::vector<std::pair<int, int>> pairs;
    std::vector<std::int32_t> ps, qs, rs;
};

Wl2PairSet wl2_pair_set(const EncodedInstance& instance, int radius, int budget);

std::pair<ValueId, ValueId> classify_on_tape(Forward& f, const EncodedInstance& instance);

struct Logits {
    Tensor what;
    Tensor why;
};

Logits classify(const EncodedInstance& instance, const ModelParams& params,
                const ModelConfig& config);

Tensor pooled_embedding(const EncodedInstance& instance, const ModelParams& params,
                        const ModelConfig& config);

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    std::uint64_t vocabulary_hash = 0;
    std::uint64_t manifest_hash = 0;

    std::string to_json() const;
    static Checkpoint from_json(const std::string& text);
    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace gounsafe
