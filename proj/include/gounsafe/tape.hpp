#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gounsafe/tensor.hpp"

namespace gounsafe {

using ValueId = std::int32_t;

enum class Activation { Relu, Sigmoid, Tanh, Elu };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

class NonScalarLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Per-feature running statistics carried across batch_norm calls.
struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.9;
    bool initialized = false;
};

// Reverse-mode tape. Values are recorded in evaluation order, so walking the
// node list backwards is already a topological order for the backward pass.
class Tape {
public:
    ValueId constant(Tensor v);
    ValueId param(const Tensor* p);

    ValueId add(ValueId a, ValueId b);
    ValueId sub(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);
    ValueId scale(ValueId a, double s);
    ValueId matmul(ValueId a, ValueId b);
    ValueId segment_sum(ValueId x, std::vector<std::int32_t> segments, std::size_t n_segments);
    ValueId activation(ValueId x, Activation act);
    ValueId softmax(ValueId x);
    ValueId log(ValueId x);
    ValueId concat(const std::vector<ValueId>& xs);
    ValueId batch_norm(ValueId x, ValueId gamma, ValueId beta, BatchNormStats* stats, bool training);
    ValueId dropout(ValueId x, double p, std::mt19937_64& rng, bool training);
    ValueId sum(ValueId x);
    ValueId mean_rows(ValueId x);
    ValueId max_rows(ValueId x);
    ValueId min_rows(ValueId x);
    ValueId gather_rows(ValueId x, std::vector<std::int32_t> rows);
    ValueId reshape(ValueId x, std::vector<std::size_t> shape);
    ValueId cross_entropy(ValueId logits, std::vector<std::int32_t> targets);

    void backward(ValueId loss);

    const Tensor& value(ValueId id) const { return nodes_[id].value; }
    const Tensor& grad(ValueId id) const { return nodes_[id].grad; }
    Tensor grad_of(const Tensor* p) const;
    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Constant, Param, Add, Sub, Mul, Scale, Matmul, SegmentSum, Activation,
        Softmax, Log, Concat, BatchNorm, Dropout, Sum, MeanRows, MaxRows,
        MinRows, GatherRows, Reshape, CrossEntropy
    };

    struct Node {
        Op op = Op::Constant;
        std::vector<ValueId> inputs;
        Tensor value;
        Tensor grad;
        std::vector<std::int32_t> ints;
        Tensor saved;
        Tensor saved2;
        double x0 = 0.0;
        Activation act = Activation::Relu;
        const Tensor* source = nullptr;
    };

    ValueId push(Node n);
    void accumulate(ValueId id, const Tensor& g);
    static void check_binary_shapes(const Tensor& a, const Tensor& b, const char* op);

    std::vector<Node> nodes_;
};

}  // namespace gounsafe
