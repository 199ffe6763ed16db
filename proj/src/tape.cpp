#include "gounsafe/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gounsafe {

namespace {

// Broadcast classification for elementwise binary ops, big operand first.
enum class Bcast { Equal, Row, Col, Scalar, Bad };

Bcast classify(const Tensor& big, const Tensor& small) {
    if (big.shape() == small.shape()) return Bcast::Equal;
    if (small.size() == 1) return Bcast::Scalar;
    if (small.rows() == 1 && small.cols() == big.cols()) return Bcast::Row;
    if (small.cols() == 1 && small.rows() == big.rows()) return Bcast::Col;
    return Bcast::Bad;
}

double pick(const Tensor& t, Bcast b, std::size_t r, std::size_t c) {
    switch (b) {
        case Bcast::Equal: return t.at(r * t.cols() + c);
        case Bcast::Scalar: return t.at(0);
        case Bcast::Row: return t.at(c);
        case Bcast::Col: return t.at(r);
        default: return 0;
    }
}

// Sum a full-shaped gradient down to the broadcast operand's shape.
Tensor reduce_to(const Tensor& g, const Tensor& like, Bcast b) {
    Tensor out(like.shape());
    std::size_t rows = g.rows(), cols = g.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            double v = g.at(r * cols + c);
            switch (b) {
                case Bcast::Equal: out.at(r * cols + c) += v; break;
                case Bcast::Scalar: out.at(0) += v; break;
                case Bcast::Row: out.at(c) += v; break;
                case Bcast::Col: out.at(r) += v; break;
                default: break;
            }
        }
    }
    return out;
}

double apply_act(Activation a, double x) {
    switch (a) {
        case Activation::Relu: return x > 0 ? x : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Tanh: return std::tanh(x);
        case Activation::Elu: return x > 0 ? x : std::expm1(x);
    }
    return x;
}

double act_grad(Activation a, double x, double y) {
    switch (a) {
        case Activation::Relu: return x > 0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return y * (1.0 - y);
        case Activation::Tanh: return 1.0 - y * y;
        case Activation::Elu: return x > 0 ? 1.0 : y + 1.0;
    }
    return 1.0;
}

constexpr double kBnEps = 1e-5;

}  // namespace

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    if (s == "elu") return Activation::Elu;
    throw std::runtime_error("unknown activation: " + s);
}

std::string activation_to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Elu: return "elu";
    }
    return "relu";
}

ValueId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
}

void Tape::check_binary_shapes(const Tensor& a, const Tensor& b, const char* op) {
    if (classify(a, b) == Bcast::Bad && classify(b, a) == Bcast::Bad)
        throw ShapeMismatch(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) +
                            " vs " + shape_to_string(b.shape()));
}

ValueId Tape::constant(Tensor v) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(v);
    return push(std::move(n));
}

ValueId Tape::param(const Tensor* p) {
    Node n;
    n.op = Op::Param;
    n.value = *p;
    n.source = p;
    return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    check_binary_shapes(ta, tb, "add");
    bool swap = classify(ta, tb) == Bcast::Bad;
    const Tensor& big = swap ? tb : ta;
    const Tensor& small = swap ? ta : tb;
    Bcast bc = classify(big, small);
    Tensor out(big.shape());
    for (std::size_t r = 0; r < big.rows(); ++r)
        for (std::size_t c = 0; c < big.cols(); ++c)
            out.at(r * big.cols() + c) = big.at(r * big.cols() + c) + pick(small, bc, r, c);
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::sub(ValueId a, ValueId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (classify(ta, tb) == Bcast::Bad)
        throw ShapeMismatch("sub: incompatible shapes");
    Bcast bc = classify(ta, tb);
    Tensor out(ta.shape());
    for (std::size_t r = 0; r < ta.rows(); ++r)
        for (std::size_t c = 0; c < ta.cols(); ++c)
            out.at(r * ta.cols() + c) = ta.at(r * ta.cols() + c) - pick(tb, bc, r, c);
    Node n;
    n.op = Op::Sub;
    n.inputs = {a, b};
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::mul(ValueId a, ValueId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    check_binary_shapes(ta, tb, "mul");
    bool swap = classify(ta, tb) == Bcast::Bad;
    const Tensor& big = swap ? tb : ta;
    const Tensor& small = swap ? ta : tb;
    Bcast bc = classify(big, small);
    Tensor out(big.shape());
    for (std::size_t r = 0; r < big.rows(); ++r)
        for (std::size_t c = 0; c < big.cols(); ++c)
            out.at(r * big.cols() + c) = big.at(r * big.cols() + c) * pick(small, bc, r, c);
    Node n;
    n.op = Op::Mul;
    n.inputs = {a, b};
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::scale(ValueId a, double s) {
    Tensor out = nodes_[a].value;
    for (double& v : out.vec()) v *= s;
    Node n;
    n.op = Op::Scale;
    n.inputs = {a};
    n.value = std::move(out);
    n.x0 = s;
    return push(std::move(n));
}

ValueId Tape::matmul(ValueId a, ValueId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
        throw ShapeMismatch("matmul: " + shape_to_string(ta.shape()) + " x " + shape_to_string(tb.shape()));
    std::size_t m = ta.rows(), k = ta.cols(), p = tb.cols();
    Tensor out({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            double v = ta.at(i, l);
            if (v == 0.0) continue;
            const double* brow = tb.data() + l * p;
            double* orow = out.data() + i * p;
            for (std::size_t j = 0; j < p; ++j) orow[j] += v * brow[j];
        }
    }
    Node n;
    n.op = Op::Matmul;
    n.inputs = {a, b};
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::segment_sum(ValueId x, std::vector<std::int32_t> segments, std::size_t n_segments) {
    const Tensor& tx = nodes_[x].value;
    if (segments.size() != tx.rows())
        throw ShapeMismatch("segment_sum: segment ids do not cover rows");
    std::size_t d = tx.cols();
    Tensor out({n_segments, d});
    for (std::size_t r = 0; r < tx.rows(); ++r) {
        std::int32_t s = segments[r];
        if (s < 0) continue;
        for (std::size_t c = 0; c < d; ++c) out.at(static_cast<std::size_t>(s), c) += tx.at(r, c);
    }
    Node n;
    n.op = Op::SegmentSum;
    n.inputs = {x};
    n.value = std::move(out);
    n.ints = std::move(segments);
    return push(std::move(n));
}

ValueId Tape::activation(ValueId x, Activation act) {
    Tensor out = nodes_[x].value;
    for (double& v : out.vec()) v = apply_act(act, v);
    Node n;
    n.op = Op::Activation;
    n.inputs = {x};
    n.value = std::move(out);
    n.act = act;
    return push(std::move(n));
}

ValueId Tape::softmax(ValueId x) {
    const Tensor& tx = nodes_[x].value;
    Tensor out(tx.shape());
    std::size_t rows = tx.rows(), cols = tx.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, tx.at(r * cols + c));
        double z = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            double e = std::exp(tx.at(r * cols + c) - mx);
            out.at(r * cols + c) = e;
            z += e;
        }
        for (std::size_t c = 0; c < cols; ++c) out.at(r * cols + c) /= z;
    }
    Node n;
    n.op = Op::Softmax;
    n.inputs = {x};
    n.value = out;
    n.saved = std::move(out);
    return push(std::move(n));
}

ValueId Tape::log(ValueId x) {
    Tensor out = nodes_[x].value;
    for (double& v : out.vec()) v = std::log(v);
    Node n;
    n.op = Op::Log;
    n.inputs = {x};
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::concat(const std::vector<ValueId>& xs) {
    if (xs.empty()) throw ShapeMismatch("concat: no inputs");
    std::size_t rows = nodes_[xs[0]].value.rows();
    std::size_t total = 0;
    for (ValueId id : xs) {
        if (nodes_[id].value.rows() != rows)
            throw ShapeMismatch("concat: row count mismatch");
        total += nodes_[id].value.cols();
    }
    Tensor out({rows, total});
    std::size_t off = 0;
    for (ValueId id : xs) {
        const Tensor& t = nodes_[id].value;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, off + c) = t.at(r, c);
        off += t.cols();
    }
    Node n;
    n.op = Op::Concat;
    n.inputs = xs;
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::batch_norm(ValueId x, ValueId gamma, ValueId beta, BatchNormStats* stats, bool training) {
    const Tensor& tx = nodes_[x].value;
    std::size_t rows = tx.rows(), cols = tx.cols();
    if (nodes_[gamma].value.size() != cols || nodes_[beta].value.size() != cols)
        throw ShapeMismatch("batch_norm: gamma/beta width mismatch");

    std::vector<double> mean(cols, 0.0), var(cols, 0.0);
    if (training || !stats->initialized) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) mean[c] += tx.at(r, c);
        for (std::size_t c = 0; c < cols; ++c) mean[c] /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                double d = tx.at(r, c) - mean[c];
                var[c] += d * d;
            }
        for (std::size_t c = 0; c < cols; ++c) var[c] /= static_cast<double>(rows);
        if (training) {
            if (!stats->initialized) {
                stats->running_mean = mean;
                stats->running_var = var;
                stats->initialized = true;
            } else {
                for (std::size_t c = 0; c < cols; ++c) {
                    stats->running_mean[c] = stats->momentum * stats->running_mean[c] + (1 - stats->momentum) * mean[c];
                    stats->running_var[c] = stats->momentum * stats->running_var[c] + (1 - stats->momentum) * var[c];
                }
            }
        }
    }
    if (!training && stats->initialized) {
        mean = stats->running_mean;
        var = stats->running_var;
    }

    Tensor xhat(tx.shape());
    Tensor invstd({1, cols});
    for (std::size_t c = 0; c < cols; ++c) invstd.at(c) = 1.0 / std::sqrt(var[c] + kBnEps);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) xhat.at(r, c) = (tx.at(r, c) - mean[c]) * invstd.at(c);

    const Tensor& g = nodes_[gamma].value;
    const Tensor& b = nodes_[beta].value;
    Tensor out(tx.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = g.at(c) * xhat.at(r, c) + b.at(c);

    Node n;
    n.op = Op::BatchNorm;
    n.inputs = {x, gamma, beta};
    n.value = std::move(out);
    n.saved = std::move(xhat);
    n.saved2 = std::move(invstd);
    n.x0 = training ? 1.0 : 0.0;
    return push(std::move(n));
}

ValueId Tape::dropout(ValueId x, double p, std::mt19937_64& rng, bool training) {
    const Tensor& tx = nodes_[x].value;
    Node n;
    n.op = Op::Dropout;
    n.inputs = {x};
    if (!training || p <= 0.0) {
        n.value = tx;
        n.x0 = 1.0;
        return push(std::move(n));
    }
    double keep = 1.0 - p;
    std::bernoulli_distribution coin(keep);
    Tensor mask(tx.shape());
    Tensor out(tx.shape());
    for (std::size_t i = 0; i < tx.size(); ++i) {
        double m = coin(rng) ? 1.0 : 0.0;
        mask.at(i) = m;
        out.at(i) = tx.at(i) * m / keep;
    }
    n.value = std::move(out);
    n.saved = std::move(mask);
    n.x0 = keep;
    return push(std::move(n));
}

ValueId Tape::sum(ValueId x) {
    double total = 0;
    for (double v : nodes_[x].value.vec()) total += v;
    Node n;
    n.op = Op::Sum;
    n.inputs = {x};
    n.value = Tensor::scalar(total);
    return push(std::move(n));
}

ValueId Tape::mean_rows(ValueId x) {
    const Tensor& tx = nodes_[x].value;
    std::size_t rows = tx.rows(), cols = tx.cols();
    Tensor out({1, cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(c) += tx.at(r, c);
    for (std::size_t c = 0; c < cols; ++c) out.at(c) /= static_cast<double>(rows);
    Node n;
    n.op = Op::MeanRows;
    n.inputs = {x};
    n.value = std::move(out);
    return push(std::move(n));
}

ValueId Tape::max_rows(ValueId x) {
    const Tensor& tx = nodes_[x].value;
    std::size_t rows = tx.rows(), cols = tx.cols();
    Tensor out({1, cols});
    std::vector<std::int32_t> arg(cols, 0);
    for (std::size_t c = 0; c < cols; ++c) {
        double best = tx.at(0, c);
        for (std::size_t r = 1; r < rows; ++r)
            if (tx.at(r, c) > best) { best = tx.at(r, c); arg[c] = static_cast<std::int32_t>(r); }
        out.at(c) = best;
    }
    Node n;
    n.op = Op::MaxRows;
    n.inputs = {x};
    n.value = std::move(out);
    n.ints = std::move(arg);
    return push(std::move(n));
}

ValueId Tape::min_rows(ValueId x) {
    const Tensor& tx = nodes_[x].value;
    std::size_t rows = tx.rows(), cols = tx.cols();
    Tensor out({1, cols});
    std::vector<std::int32_t> arg(cols, 0);
    for (std::size_t c = 0; c < cols; ++c) {
        double best = tx.at(0, c);
        for (std::size_t r = 1; r < rows; ++r)
            if (tx.at(r, c) < best) { best = tx.at(r, c); arg[c] = static_cast<std::int32_t>(r); }
        out.at(c) = best;
    }
    Node n;
    n.op = Op::MinRows;
    n.inputs = {x};
    n.value = std::move(out);
    n.ints = std::move(arg);
    return push(std::move(n));
}

ValueId Tape::gather_rows(ValueId x, std::vector<std::int32_t> rows) {
    const Tensor& tx = nodes_[x].value;
    std::size_t cols = tx.cols();
    Tensor out({rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto r = static_cast<std::size_t>(rows[i]);
        if (r >= tx.rows()) throw ShapeMismatch("gather_rows: row index out of range");
        for (std::size_t c = 0; c < cols; ++c) out.at(i, c) = tx.at(r, c);
    }
    Node n;
    n.op = Op::GatherRows;
    n.inputs = {x};
    n.value = std::move(out);
    n.ints = std::move(rows);
    return push(std::move(n));
}

ValueId Tape::reshape(ValueId x, std::vector<std::size_t> shape) {
    Node n;
    n.op = Op::Reshape;
    n.inputs = {x};
    n.value = nodes_[x].value.reshaped(std::move(shape));
    return push(std::move(n));
}

ValueId Tape::cross_entropy(ValueId logits, std::vector<std::int32_t> targets) {
    const Tensor& z = nodes_[logits].value;
    std::size_t rows = z.rows(), cols = z.cols();
    if (targets.size() != rows) throw ShapeMismatch("cross_entropy: target count mismatch");
    Tensor probs(z.shape());
    double loss = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, z.at(r, c));
        double s = 0;
        for (std::size_t c = 0; c < cols; ++c) s += std::exp(z.at(r, c) - mx);
        double lse = mx + std::log(s);
        auto t = static_cast<std::size_t>(targets[r]);
        if (t >= cols) throw ShapeMismatch("cross_entropy: target out of range");
        loss += lse - z.at(r, t);
        for (std::size_t c = 0; c < cols; ++c) probs.at(r, c) = std::exp(z.at(r, c) - lse);
    }
    loss /= static_cast<double>(rows);
    Node n;
    n.op = Op::CrossEntropy;
    n.inputs = {logits};
    n.value = Tensor::scalar(loss);
    n.saved = std::move(probs);
    n.ints = std::move(targets);
    return push(std::move(n));
}

void Tape::accumulate(ValueId id, const Tensor& g) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) n.grad.at(i) += g.at(i);
}

void Tape::backward(ValueId loss) {
    if (nodes_[loss].value.size() != 1)
        throw NonScalarLoss("backward requires a scalar loss, got shape " +
                            shape_to_string(nodes_[loss].value.shape()));
    for (Node& n : nodes_) n.grad = Tensor();
    nodes_[loss].grad = Tensor(nodes_[loss].value.shape());
    nodes_[loss].grad.at(0) = 1.0;

    for (ValueId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) continue;
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Constant:
            case Op::Param:
                break;
            case Op::Add: {
                const Tensor& ta = nodes_[n.inputs[0]].value;
                const Tensor& tb = nodes_[n.inputs[1]].value;
                bool swap = classify(ta, tb) == Bcast::Bad;
                const Tensor& big = swap ? tb : ta;
                const Tensor& small = swap ? ta : tb;
                Bcast bc = classify(big, small);
                accumulate(swap ? n.inputs[1] : n.inputs[0], reduce_to(g, big, Bcast::Equal));
                accumulate(swap ? n.inputs[0] : n.inputs[1], reduce_to(g, small, bc));
                break;
            }
            case Op::Sub: {
                const Tensor& ta = nodes_[n.inputs[0]].value;
                const Tensor& tb = nodes_[n.inputs[1]].value;
                Bcast bc = classify(ta, tb);
                accumulate(n.inputs[0], reduce_to(g, ta, Bcast::Equal));
                Tensor gb = reduce_to(g, tb, bc);
                for (double& v : gb.vec()) v = -v;
                accumulate(n.inputs[1], gb);
                break;
            }
            case Op::Mul: {
                const Tensor& ta = nodes_[n.inputs[0]].value;
                const Tensor& tb = nodes_[n.inputs[1]].value;
                bool swap = classify(ta, tb) == Bcast::Bad;
                const Tensor& big = swap ? tb : ta;
                const Tensor& small = swap ? ta : tb;
                Bcast bc = classify(big, small);
                std::size_t cols = big.cols();
                Tensor gbig(big.shape());
                Tensor gsmall_full(big.shape());
                for (std::size_t r = 0; r < big.rows(); ++r)
                    for (std::size_t c = 0; c < cols; ++c) {
                        double gv = g.at(r * cols + c);
                        gbig.at(r * cols + c) = gv * pick(small, bc, r, c);
                        gsmall_full.at(r * cols + c) = gv * big.at(r * cols + c);
                    }
                accumulate(swap ? n.inputs[1] : n.inputs[0], gbig);
                accumulate(swap ? n.inputs[0] : n.inputs[1], reduce_to(gsmall_full, small, bc));
                break;
            }
            case Op::Scale: {
                Tensor gx = g;
                for (double& v : gx.vec()) v *= n.x0;
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Matmul: {
                const Tensor& ta = nodes_[n.inputs[0]].value;
                const Tensor& tb = nodes_[n.inputs[1]].value;
                std::size_t m = ta.rows(), k = ta.cols(), p = tb.cols();
                Tensor ga({m, k});
                Tensor gb({k, p});
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < p; ++j) {
                        double gv = g.at(i * p + j);
                        if (gv == 0.0) continue;
                        for (std::size_t l = 0; l < k; ++l) {
                            ga.at(i, l) += gv * tb.at(l, j);
                            gb.at(l, j) += gv * ta.at(i, l);
                        }
                    }
                accumulate(n.inputs[0], ga);
                accumulate(n.inputs[1], gb);
                break;
            }
            case Op::SegmentSum: {
                const Tensor& tx = nodes_[n.inputs[0]].value;
                std::size_t d = tx.cols();
                Tensor gx(tx.shape());
                for (std::size_t r = 0; r < tx.rows(); ++r) {
                    std::int32_t s = n.ints[r];
                    if (s < 0) continue;
                    for (std::size_t c = 0; c < d; ++c)
                        gx.at(r, c) = g.at(static_cast<std::size_t>(s) * d + c);
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Activation: {
                const Tensor& tx = nodes_[n.inputs[0]].value;
                Tensor gx(tx.shape());
                for (std::size_t i = 0; i < tx.size(); ++i)
                    gx.at(i) = g.at(i) * act_grad(n.act, tx.at(i), n.value.at(i));
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Softmax: {
                const Tensor& p = n.saved;
                std::size_t rows = p.rows(), cols = p.cols();
                Tensor gx(p.shape());
                for (std::size_t r = 0; r < rows; ++r) {
                    double dot = 0;
                    for (std::size_t c = 0; c < cols; ++c) dot += g.at(r * cols + c) * p.at(r * cols + c);
                    for (std::size_t c = 0; c < cols; ++c)
                        gx.at(r * cols + c) = p.at(r * cols + c) * (g.at(r * cols + c) - dot);
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Log: {
                const Tensor& tx = nodes_[n.inputs[0]].value;
                Tensor gx(tx.shape());
                for (std::size_t i = 0; i < tx.size(); ++i) gx.at(i) = g.at(i) / tx.at(i);
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Concat: {
                std::size_t rows = n.value.rows();
                std::size_t off = 0;
                for (ValueId in : n.inputs) {
                    const Tensor& t = nodes_[in].value;
                    Tensor gi(t.shape());
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < t.cols(); ++c)
                            gi.at(r * t.cols() + c) = g.at(r, off + c);
                    accumulate(in, gi);
                    off += t.cols();
                }
                break;
            }
            case Op::BatchNorm: {
                const Tensor& xhat = n.saved;
                const Tensor& invstd = n.saved2;
                const Tensor& gamma = nodes_[n.inputs[1]].value;
                std::size_t rows = xhat.rows(), cols = xhat.cols();
                Tensor dgamma({1, cols});
                Tensor dbeta({1, cols});
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) {
                        dgamma.at(c) += g.at(r * cols + c) * xhat.at(r, c);
                        dbeta.at(c) += g.at(r * cols + c);
                    }
                Tensor gx(xhat.shape());
                if (n.x0 > 0.5) {
                    double nr = static_cast<double>(rows);
                    for (std::size_t c = 0; c < cols; ++c) {
                        double sg = dbeta.at(c);
                        double sgx = dgamma.at(c);
                        for (std::size_t r = 0; r < rows; ++r) {
                            double gv = g.at(r * cols + c);
                            gx.at(r, c) = gamma.at(c) * invstd.at(c) / nr *
                                          (nr * gv - sg - xhat.at(r, c) * sgx);
                        }
                    }
                } else {
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c)
                            gx.at(r, c) = g.at(r * cols + c) * gamma.at(c) * invstd.at(c);
                }
                accumulate(n.inputs[0], gx);
                accumulate(n.inputs[1], dgamma.reshaped(gamma.shape()));
                accumulate(n.inputs[2], dbeta.reshaped(nodes_[n.inputs[2]].value.shape()));
                break;
            }
            case Op::Dropout: {
                if (n.saved.size() == 0) {
                    accumulate(n.inputs[0], g);
                } else {
                    Tensor gx(g.shape());
                    for (std::size_t i = 0; i < g.size(); ++i)
                        gx.at(i) = g.at(i) * n.saved.at(i) / n.x0;
                    accumulate(n.inputs[0], gx);
                }
                break;
            }
            case Op::Sum: {
                const Tensor& tx = nodes_[n.inputs[0]].value;
                Tensor gx(tx.shape());
                for (double& v : gx.vec()) v = g.at(0);
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::MeanRows: {
                const Tensor& tx = nodes_[n.inputs[0]].value;
                double nr = static_cast<double>(tx.rows());
                Tensor gx(tx.shape());
                for (std::size_t r = 0; r < tx.rows(); ++r)
                    for (std::size_t c = 0; c < tx.cols(); ++c) gx.at(r, c) = g.at(c) / nr;
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::MaxRows:
            case Op::MinRows: {
                const Tensor& tx = nodes_[n.inputs[0]].value;
                Tensor gx(tx.shape());
                for (std::size_t c = 0; c < tx.cols(); ++c)
                    gx.at(static_cast<std::size_t>(n.ints[c]), c) = g.at(c);
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::GatherRows: {
                const Tensor& tx = nodes_[n.inputs[0]].value;
                Tensor gx(tx.shape());
                std::size_t cols = tx.cols();
                for (std::size_t i = 0; i < n.ints.size(); ++i) {
                    auto r = static_cast<std::size_t>(n.ints[i]);
                    for (std::size_t c = 0; c < cols; ++c) gx.at(r, c) += g.at(i * cols + c);
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Reshape: {
                accumulate(n.inputs[0], g.reshaped(nodes_[n.inputs[0]].value.shape()));
                break;
            }
            case Op::CrossEntropy: {
                const Tensor& p = n.saved;
                std::size_t rows = p.rows(), cols = p.cols();
                double scale = g.at(0) / static_cast<double>(rows);
                Tensor gx(p.shape());
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) {
                        double onehot = (static_cast<std::size_t>(n.ints[r]) == c) ? 1.0 : 0.0;
                        gx.at(r, c) = (p.at(r, c) - onehot) * scale;
                    }
                accumulate(n.inputs[0], gx);
                break;
            }
        }
    }
}

Tensor Tape::grad_of(const Tensor* p) const {
    Tensor total(p->shape());
    for (const Node& n : nodes_) {
        if (n.op == Op::Param && n.source == p && n.grad.size() != 0)
            for (std::size_t i = 0; i < total.size(); ++i) total.at(i) += n.grad.at(i);
    }
    return total;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace gounsafe
