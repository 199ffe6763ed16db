#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gounsafe/conformal.hpp"

using namespace gounsafe;

namespace {

// Draws (probs, label) pairs from a model that IS the true conditional
// distribution, so conformal coverage guarantees apply exactly.
struct OracleSample {
    std::vector<std::vector<double>> logits;
    std::vector<int> gold;
};

OracleSample sample_oracle(int count, int classes, double sharpness, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, sharpness);
    OracleSample out;
    for (int i = 0; i < count; ++i) {
        std::vector<double> z(classes);
        for (double& v : z) v = noise(rng);
        std::vector<double> probs = temperature_softmax(z, 1.0);
        std::discrete_distribution<int> pick(probs.begin(), probs.end());
        out.logits.push_back(std::move(z));
        out.gold.push_back(pick(rng));
    }
    return out;
}

bool contains(const PredictionSet& set, int label) {
    return std::find(set.labels.begin(), set.labels.end(), label) != set.labels.end();
}

}  // namespace

TEST_CASE("fit_temperature returns exactly one on symmetric logits") {
    std::vector<std::vector<double>> logits(8, std::vector<double>{2.0, 2.0, 2.0});
    std::vector<int> gold = {0, 1, 2, 0, 1, 2, 0, 1};
    CHECK(fit_temperature(logits, gold) == 1.0);
}

TEST_CASE("fit_temperature softens overconfident logits") {
    std::vector<std::vector<double>> logits;
    std::vector<int> gold;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> z = {0.0, 0.0, 0.0};
        z[i % 3] = 10.0;
        logits.push_back(z);
        // Every fifth prediction is wrong: 20% calibration error.
        gold.push_back(i % 5 == 0 ? (i + 1) % 3 : i % 3);
    }
    double t = fit_temperature(logits, gold);
    CHECK(t > 1.0);
    CHECK(t <= 10.0);
    CHECK(mean_nll(logits, gold, t) <= mean_nll(logits, gold, 1.0));
}

TEST_CASE("fit_temperature sharpens underconfident logits") {
    std::vector<std::vector<double>> logits;
    std::vector<int> gold;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> z = {0.0, 0.0, 0.0};
        z[i % 3] = 0.1;
        logits.push_back(z);
        gold.push_back(i % 3);
    }
    double t = fit_temperature(logits, gold);
    CHECK(t < 1.0);
    CHECK(t >= 0.05);
    CHECK(mean_nll(logits, gold, t) <= mean_nll(logits, gold, 1.0));
}

TEST_CASE("fit_temperature rejects empty calibration data") {
    CHECK_THROWS_AS(fit_temperature({}, {}), EmptyCalibration);
    CHECK_THROWS_AS(mean_nll({}, {}, 1.0), EmptyCalibration);
    CHECK_THROWS_AS(mean_nll({{1.0, 2.0}}, {5}, 1.0), LabelOutOfRange);
}

TEST_CASE("giq score is the cumulative mass down to the label's rank") {
    std::vector<double> probs = {0.7, 0.2, 0.1};
    CHECK(giq_score(probs, 0) == doctest::Approx(0.7));
    CHECK(giq_score(probs, 1) == doctest::Approx(0.9));
    CHECK(giq_score(probs, 2) == doctest::Approx(1.0));

    std::vector<double> uniform(4, 0.25);
    for (int label = 0; label < 4; ++label)
        CHECK(giq_score(uniform, label) == doctest::Approx(0.25 * (label + 1)));

    CHECK_THROWS_AS(giq_score(probs, 3), LabelOutOfRange);
    CHECK_THROWS_AS(giq_score(probs, -1), LabelOutOfRange);
    CHECK_THROWS_AS(giq_score({0.7, 0.2}, 0), std::invalid_argument);
}

TEST_CASE("conformal threshold takes the finite-sample quantile") {
    std::vector<double> five = {0.2, 0.4, 0.6, 0.8, 1.0};
    CHECK(conformal_threshold(five, 0.1) == 1.0);

    std::vector<double> nineteen;
    for (int i = 1; i <= 19; ++i) nineteen.push_back(0.01 * i);
    std::mt19937_64 rng(3);
    std::shuffle(nineteen.begin(), nineteen.end(), rng);
    CHECK(conformal_threshold(nineteen, 0.1) == doctest::Approx(0.18));

    CHECK(conformal_threshold(five, 0.99) == doctest::Approx(0.2));

    CHECK_THROWS_AS(conformal_threshold({}, 0.1), EmptyCalibration);
    CHECK_THROWS_AS(conformal_threshold(five, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(conformal_threshold(five, 1.0), std::invalid_argument);
}

TEST_CASE("predict_set accumulates mass greedily and never returns empty") {
    std::vector<double> probs = {0.7, 0.2, 0.1};
    PredictionSet set = predict_set(probs, 0.75);
    CHECK(set.labels == std::vector<int>{0, 1});
    CHECK(set.probabilities == std::vector<double>{0.7, 0.2});

    CHECK(predict_set(probs, 0.0).labels == std::vector<int>{0});
    CHECK(predict_set(probs, 1.0).labels == std::vector<int>{0, 1, 2});

    std::vector<double> with_zero = {0.5, 0.5, 0.0};
    CHECK(predict_set(with_zero, 1.0).labels == std::vector<int>{0, 1});

    std::vector<double> skewed = {0.05, 0.9, 0.05};
    PredictionSet top = predict_set(skewed, 0.0);
    CHECK(top.labels == std::vector<int>{1});

    CHECK_THROWS_AS(predict_set(probs, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(predict_set(probs, -0.1), std::invalid_argument);
}

TEST_CASE("predict_set size is non-decreasing in the threshold") {
    std::vector<double> probs = {0.4, 0.3, 0.15, 0.1, 0.05};
    std::size_t last = 0;
    for (double thr = 0.0; thr <= 1.0; thr += 0.01) {
        std::size_t size = predict_set(probs, thr).labels.size();
        CHECK(size >= last);
        last = size;
    }
    CHECK(last == probs.size());
}

TEST_CASE("temperature rescaling preserves the probability ordering") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise(0.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z(6);
        for (double& v : z) v = noise(rng);
        std::vector<double> base = temperature_softmax(z, 1.0);
        for (double t : {0.05, 0.3, 2.0, 10.0}) {
            std::vector<double> scaled = temperature_softmax(z, t);
            for (std::size_t a = 0; a < z.size(); ++a)
                for (std::size_t b = 0; b < z.size(); ++b)
                    if (base[a] > base[b]) CHECK(scaled[a] >= scaled[b]);
        }
    }
}

TEST_CASE("coverage meets the conformal guarantee on oracle data") {
    for (std::uint64_t head_seed : {101ULL, 202ULL}) {
        std::mt19937_64 rng(head_seed);
        OracleSample calib = sample_oracle(500, 5, 2.0, rng);
        OracleSample test = sample_oracle(1000, 5, 2.0, rng);

        std::vector<double> scores;
        for (std::size_t i = 0; i < calib.logits.size(); ++i)
            scores.push_back(giq_score(temperature_softmax(calib.logits[i], 1.0), calib.gold[i]));
        double threshold = conformal_threshold(scores, 0.1);

        int covered = 0;
        for (std::size_t i = 0; i < test.logits.size(); ++i) {
            PredictionSet set = conformal_predict(test.logits[i], 1.0, threshold);
            if (contains(set, test.gold[i])) ++covered;
        }
        double coverage = covered / 1000.0;
        CAPTURE(head_seed);
        CHECK(coverage >= 0.88);
    }
}

TEST_CASE("prediction sets grow with predictive entropy") {
    std::mt19937_64 rng(7);
    OracleSample calib_sharp = sample_oracle(250, 5, 4.0, rng);
    OracleSample calib_flat = sample_oracle(250, 5, 0.5, rng);

    std::vector<double> scores;
    for (std::size_t i = 0; i < calib_sharp.logits.size(); ++i)
        scores.push_back(giq_score(temperature_softmax(calib_sharp.logits[i], 1.0),
                                   calib_sharp.gold[i]));
    for (std::size_t i = 0; i < calib_flat.logits.size(); ++i)
        scores.push_back(giq_score(temperature_softmax(calib_flat.logits[i], 1.0),
                                   calib_flat.gold[i]));
    double threshold = conformal_threshold(scores, 0.1);

    auto mean_size = [&](double sharpness) {
        OracleSample test = sample_oracle(500, 5, sharpness, rng);
        double total = 0;
        for (const auto& z : test.logits)
            total += static_cast<double>(conformal_predict(z, 1.0, threshold).labels.size());
        return total / 500.0;
    };
    double low_entropy = mean_size(4.0);
    double high_entropy = mean_size(0.5);
    CHECK(low_entropy < high_entropy);
}

TEST_CASE("calibrate_heads assembles a valid artifact") {
    std::mt19937_64 rng(29);
    OracleSample what = sample_oracle(120, 7, 2.0, rng);
    OracleSample why = sample_oracle(120, 11, 1.5, rng);

    CalibrationArtifact a = calibrate_heads(what.logits, what.gold, why.logits, why.gold, 0.1);
    CHECK(a.epsilon == 0.1);
    CHECK(a.calibration_size == 120);
    CHECK(a.t_what > 0.0);
    CHECK(a.t_why > 0.0);
    CHECK(a.threshold_what >= 0.0);
    CHECK(a.threshold_what <= 1.0);
    CHECK(a.threshold_why >= 0.0);
    CHECK(a.threshold_why <= 1.0);
    CHECK_NOTHROW(a.validate());

    CalibrationArtifact back = CalibrationArtifact::from_json(a.to_json());
    CHECK(back == a);

    CHECK_THROWS_AS(calibrate_heads(what.logits, what.gold, {}, {}, 0.1),
                    std::invalid_argument);
}

TEST_CASE("artifact validation rejects out-of-range fields") {
    CalibrationArtifact a;
    CHECK_NOTHROW(a.validate());
    CalibrationArtifact bad = a;
    bad.t_what = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = a;
    bad.threshold_why = 1.2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = a;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = a;
    bad.epsilon = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = a;
    bad.calibration_size = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
