#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "gounsafe/optimizer.hpp"
#include "gounsafe/tape.hpp"

using namespace gounsafe;

namespace {

double rel_err(double a, double b) {
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
    return std::fabs(a - b) / denom;
}

// Central finite difference of f with respect to one element of a parameter.
double fd_grad(Tensor& p, std::size_t i, const std::function<double()>& f, double h = 1e-5) {
    double saved = p.at(i);
    p.at(i) = saved + h;
    double fp = f();
    p.at(i) = saved - h;
    double fm = f();
    p.at(i) = saved;
    return (fp - fm) / (2.0 * h);
}

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, scale);
    for (double& v : t.vec()) v = dist(rng);
    return t;
}

}  // namespace

TEST_CASE("matmul values") {
    Tape tape;
    ValueId a = tape.constant(Tensor({1, 2}, {1, 2}));
    ValueId b = tape.constant(Tensor({2, 1}, {3, 4}));
    ValueId c = tape.matmul(a, b);
    CHECK(tape.value(c).size() == 1);
    CHECK(tape.value(c).at(0) == doctest::Approx(11.0));

    ValueId bad = tape.constant(Tensor({3, 3}));
    CHECK_THROWS_AS(tape.matmul(a, bad), ShapeMismatch);
}

TEST_CASE("softmax rows sum to one and equal logits give uniform rows") {
    Tape tape;
    ValueId x = tape.constant(Tensor({2, 4}, {5, 5, 5, 5, 1, 2, 3, 4}));
    ValueId p = tape.softmax(x);
    const Tensor& probs = tape.value(p);
    for (std::size_t r = 0; r < 2; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) s += probs.at(r, c);
        CHECK(s == doctest::Approx(1.0));
    }
    for (std::size_t c = 0; c < 4; ++c) CHECK(probs.at(0, c) == doctest::Approx(0.25));
    CHECK(probs.at(1, 3) > probs.at(1, 0));
}

TEST_CASE("segment_sum groups rows and drops negative ids") {
    Tape tape;
    ValueId x = tape.constant(Tensor({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
    ValueId s = tape.segment_sum(x, {0, 1, 0, -1}, 2);
    const Tensor& out = tape.value(s);
    CHECK(out.rows() == 2);
    CHECK(out.at(0, 0) == doctest::Approx(6.0));
    CHECK(out.at(0, 1) == doctest::Approx(8.0));
    CHECK(out.at(1, 0) == doctest::Approx(3.0));
    CHECK(out.at(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("sum of squares gradient") {
    Tensor x({1, 3}, {1, 2, 3});
    Tape tape;
    ValueId xi = tape.param(&x);
    ValueId sq = tape.mul(xi, xi);
    ValueId loss = tape.sum(sq);
    tape.backward(loss);
    Tensor g = tape.grad_of(&x);
    CHECK(g.at(0) == doctest::Approx(2.0));
    CHECK(g.at(1) == doctest::Approx(4.0));
    CHECK(g.at(2) == doctest::Approx(6.0));
}

TEST_CASE("cross entropy gradient equals softmax minus onehot over N") {
    Tensor z({2, 3}, {0.2, -0.1, 0.5, 1.0, 0.0, -1.0});
    Tape tape;
    ValueId zi = tape.param(&z);
    ValueId loss = tape.cross_entropy(zi, {2, 0});
    tape.backward(loss);
    Tensor g = tape.grad_of(&z);

    for (std::size_t r = 0; r < 2; ++r) {
        double mx = std::max({z.at(r, 0), z.at(r, 1), z.at(r, 2)});
        double s = 0;
        for (std::size_t c = 0; c < 3; ++c) s += std::exp(z.at(r, c) - mx);
        for (std::size_t c = 0; c < 3; ++c) {
            double p = std::exp(z.at(r, c) - mx) / s;
            double onehot = (r == 0 && c == 2) || (r == 1 && c == 0) ? 1.0 : 0.0;
            CHECK(g.at(r, c) == doctest::Approx((p - onehot) / 2.0));
        }
    }
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape tape;
    ValueId x = tape.constant(Tensor({2, 2}));
    CHECK_THROWS_AS(tape.backward(x), NonScalarLoss);
}

TEST_CASE("dropout is identity at eval and deterministic under a fixed seed") {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    {
        Tape tape;
        std::mt19937_64 rng(7);
        ValueId xi = tape.param(&x);
        ValueId d = tape.dropout(xi, 0.5, rng, false);
        for (std::size_t i = 0; i < 6; ++i) CHECK(tape.value(d).at(i) == doctest::Approx(x.at(i)));
    }
    Tensor first;
    for (int trial = 0; trial < 2; ++trial) {
        Tape tape;
        std::mt19937_64 rng(7);
        ValueId xi = tape.param(&x);
        ValueId d = tape.dropout(xi, 0.5, rng, true);
        if (trial == 0) {
            first = tape.value(d);
        } else {
            for (std::size_t i = 0; i < 6; ++i) CHECK(tape.value(d).at(i) == doctest::Approx(first.at(i)));
        }
    }
    bool any_zero = false, any_scaled = false;
    for (std::size_t i = 0; i < 6; ++i) {
        if (first.at(i) == 0.0) any_zero = true;
        if (first.at(i) == doctest::Approx(x.at(i) * 2.0)) any_scaled = true;
    }
    CHECK(any_zero);
    CHECK(any_scaled);
}

TEST_CASE("max and min rows route gradients to the extreme row") {
    Tensor x({3, 2}, {1, 9, 5, 2, 3, 4});
    Tape tape;
    ValueId xi = tape.param(&x);
    ValueId mx = tape.max_rows(xi);
    ValueId mn = tape.min_rows(xi);
    CHECK(tape.value(mx).at(0) == doctest::Approx(5.0));
    CHECK(tape.value(mx).at(1) == doctest::Approx(9.0));
    CHECK(tape.value(mn).at(0) == doctest::Approx(1.0));
    CHECK(tape.value(mn).at(1) == doctest::Approx(2.0));
    ValueId loss = tape.sum(tape.concat({mx, mn}));
    tape.backward(loss);
    Tensor g = tape.grad_of(&x);
    CHECK(g.at(0, 0) == doctest::Approx(1.0));
    CHECK(g.at(1, 0) == doctest::Approx(1.0));
    CHECK(g.at(2, 0) == doctest::Approx(0.0));
    CHECK(g.at(0, 1) == doctest::Approx(1.0));
    CHECK(g.at(1, 1) == doctest::Approx(1.0));
    CHECK(g.at(2, 1) == doctest::Approx(0.0));
}

TEST_CASE("gather_rows accumulates gradients for duplicate rows") {
    Tensor x({2, 2}, {1, 2, 3, 4});
    Tape tape;
    ValueId xi = tape.param(&x);
    ValueId gathered = tape.gather_rows(xi, {0, 0, 1});
    ValueId loss = tape.sum(gathered);
    tape.backward(loss);
    Tensor g = tape.grad_of(&x);
    CHECK(g.at(0, 0) == doctest::Approx(2.0));
    CHECK(g.at(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("batch norm maintains running statistics") {
    Tensor gamma({1, 2}, {1, 1});
    Tensor beta({1, 2}, {0, 0});
    BatchNormStats stats;
    Tensor x1({2, 2}, {0, 0, 2, 4});

    Tape tape;
    ValueId xi = tape.constant(x1);
    ValueId gi = tape.param(&gamma);
    ValueId bi = tape.param(&beta);
    tape.batch_norm(xi, gi, bi, &stats, true);
    REQUIRE(stats.initialized);
    CHECK(stats.running_mean[0] == doctest::Approx(1.0));
    CHECK(stats.running_mean[1] == doctest::Approx(2.0));
    CHECK(stats.running_var[0] == doctest::Approx(1.0));
    CHECK(stats.running_var[1] == doctest::Approx(4.0));

    Tape tape2;
    ValueId xi2 = tape2.constant(Tensor({2, 2}, {3, 6, 3, 6}));
    ValueId gi2 = tape2.param(&gamma);
    ValueId bi2 = tape2.param(&beta);
    tape2.batch_norm(xi2, gi2, bi2, &stats, true);
    CHECK(stats.running_mean[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 3.0));
    CHECK(stats.running_mean[1] == doctest::Approx(0.9 * 2.0 + 0.1 * 6.0));

    Tape tape3;
    ValueId xi3 = tape3.constant(Tensor({1, 2}, {stats.running_mean[0], stats.running_mean[1]}));
    ValueId gi3 = tape3.param(&gamma);
    ValueId bi3 = tape3.param(&beta);
    ValueId y = tape3.batch_norm(xi3, gi3, bi3, &stats, false);
    CHECK(tape3.value(y).at(0) == doctest::Approx(0.0));
    CHECK(tape3.value(y).at(1) == doctest::Approx(0.0));
}

TEST_CASE("finite difference check over a full network, ten seeds") {
    const Activation acts[] = {Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Elu};
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 init_rng(seed);
        Tensor x = random_tensor({6, 4}, init_rng);
        Tensor W1 = random_tensor({4, 8}, init_rng, 0.5);
        Tensor b1 = random_tensor({1, 8}, init_rng, 0.1);
        Tensor gamma = random_tensor({1, 8}, init_rng, 0.3);
        for (double& v : gamma.vec()) v += 1.0;
        Tensor beta = random_tensor({1, 8}, init_rng, 0.1);
        Tensor W2 = random_tensor({8, 5}, init_rng, 0.5);
        Tensor b2 = random_tensor({1, 5}, init_rng, 0.1);
        Tensor W3 = random_tensor({24, 1}, init_rng, 0.3);
        Activation act = acts[seed % 4];

        auto eval = [&](Tape* out_tape, ValueId* out_loss) -> double {
            Tape tape;
            std::mt19937_64 drop_rng(seed * 31 + 5);
            BatchNormStats stats;
            ValueId xi = tape.constant(x);
            ValueId h1 = tape.activation(tape.add(tape.matmul(xi, tape.param(&W1)), tape.param(&b1)), act);
            ValueId hn = tape.batch_norm(h1, tape.param(&gamma), tape.param(&beta), &stats, true);
            ValueId hd = tape.dropout(hn, 0.5, drop_rng, true);
            ValueId pooled = tape.segment_sum(hd, {0, 0, 1, 1, 2, 2}, 3);
            ValueId logits = tape.add(tape.matmul(pooled, tape.param(&W2)), tape.param(&b2));
            ValueId ce = tape.cross_entropy(logits, {0, 2, 4});

            ValueId probs = tape.softmax(logits);
            ValueId ent = tape.scale(tape.sum(tape.mul(probs, tape.log(probs))), -0.1);

            ValueId stats_row = tape.concat({tape.max_rows(hd), tape.min_rows(hd), tape.mean_rows(hd)});
            ValueId extra = tape.scale(tape.sum(tape.matmul(stats_row, tape.param(&W3))), 0.05);

            ValueId loss = tape.add(tape.add(ce, ent), extra);
            double v = tape.value(loss).item();
            if (out_tape) {
                *out_tape = std::move(tape);
                *out_loss = loss;
            }
            return v;
        };

        Tape tape;
        ValueId loss = 0;
        eval(&tape, &loss);
        tape.backward(loss);

        Tensor* params[] = {&W1, &b1, &gamma, &beta, &W2, &b2, &W3};
        auto scalar_eval = [&]() { return eval(nullptr, nullptr); };
        for (Tensor* p : params) {
            Tensor analytic = tape.grad_of(p);
            for (std::size_t i = 0; i < p->size(); ++i) {
                double numeric = fd_grad(*p, i, scalar_eval);
                if (std::fabs(numeric) < 1e-10 && std::fabs(analytic.at(i)) < 1e-10) continue;
                CHECK(rel_err(analytic.at(i), numeric) < 1e-4);
            }
        }
    }
}

TEST_CASE("adam first step magnitude and zero-gradient behavior") {
    ParamMap params;
    params.emplace("w", Tensor::scalar(0.0));
    Adam opt;

    ParamMap grads;
    grads.emplace("w", Tensor::scalar(1.0));
    opt.step(params, grads);
    double delta1 = std::fabs(params.at("w").item());
    CHECK(delta1 >= 0.00099);
    CHECK(delta1 <= 0.001);

    ParamMap params2;
    params2.emplace("w", Tensor::scalar(0.5));
    Adam opt2;
    ParamMap zero;
    zero.emplace("w", Tensor::scalar(0.0));
    opt2.step(params2, zero);
    CHECK(params2.at("w").item() == doctest::Approx(0.5));

    grads.at("w").at(0) = 1.0;
    double before = params.at("w").item();
    opt.step(params, grads);
    double delta2 = std::fabs(params.at("w").item() - before);
    CHECK(delta2 <= delta1 * 1.01);

    ParamMap missing;
    double untouched = params.at("w").item();
    opt.step(params, missing);
    CHECK(params.at("w").item() == doctest::Approx(untouched));
}

TEST_CASE("broadcast add and mul shapes") {
    Tape tape;
    ValueId a = tape.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    ValueId r = tape.constant(Tensor({1, 3}, {10, 20, 30}));
    ValueId c = tape.constant(Tensor({2, 1}, {2, 3}));

    const Tensor& sum = tape.value(tape.add(a, r));
    CHECK(sum.at(0, 0) == doctest::Approx(11.0));
    CHECK(sum.at(1, 2) == doctest::Approx(36.0));

    const Tensor& flipped = tape.value(tape.add(r, a));
    CHECK(flipped.at(1, 2) == doctest::Approx(36.0));

    const Tensor& prod = tape.value(tape.mul(a, c));
    CHECK(prod.at(0, 1) == doctest::Approx(4.0));
    CHECK(prod.at(1, 1) == doctest::Approx(15.0));

    ValueId bad = tape.constant(Tensor({3, 2}));
    CHECK_THROWS_AS(tape.add(a, bad), ShapeMismatch);
}
