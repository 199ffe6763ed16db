#include "gounsafe/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace gounsafe {

namespace {

using nlohmann::json;

void check_distribution(const std::vector<double>& probs) {
    if (probs.empty()) throw std::invalid_argument("empty probability vector");
    double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("probabilities sum to " + std::to_string(total));
}

// Descending probability, ties broken by class id for determinism.
std::vector<int> descending_order(const std::vector<double>& probs) {
    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return probs[a] > probs[b]; });
    return order;
}

}  // namespace

void CalibrationArtifact::validate() const {
    if (t_what <= 0.0 || t_why <= 0.0)
        throw std::invalid_argument("temperature must be positive");
    if (threshold_what < 0.0 || threshold_what > 1.0 || threshold_why < 0.0 ||
        threshold_why > 1.0)
        throw std::invalid_argument("threshold outside [0, 1]");
    if (epsilon <= 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("epsilon outside (0, 1)");
    if (calibration_size < 0) throw std::invalid_argument("negative calibration size");
}

std::string CalibrationArtifact::to_json() const {
    json j;
    j["t-what"] = t_what;
    j["t-why"] = t_why;
    j["threshold-what"] = threshold_what;
    j["threshold-why"] = threshold_why;
    j["epsilon"] = epsilon;
    j["calibration-size"] = calibration_size;
    return j.dump(2) + "\n";
}

CalibrationArtifact CalibrationArtifact::from_json(const std::string& text) {
    json j = json::parse(text);
    CalibrationArtifact a;
    a.t_what = j.at("t-what").get<double>();
    a.t_why = j.at("t-why").get<double>();
    a.threshold_what = j.at("threshold-what").get<double>();
    a.threshold_why = j.at("threshold-why").get<double>();
    a.epsilon = j.at("epsilon").get<double>();
    a.calibration_size = j.at("calibration-size").get<int>();
    a.validate();
    return a;
}

std::vector<double> temperature_softmax(const std::vector<double>& logits, double t) {
    if (logits.empty()) throw std::invalid_argument("empty logit vector");
    if (t <= 0.0) throw std::invalid_argument("temperature must be positive");
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / t);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

double mean_nll(const std::vector<std::vector<double>>& logits, const std::vector<int>& gold,
                double t) {
    if (logits.empty()) throw EmptyCalibration("no calibration logits");
    if (logits.size() != gold.size())
        throw std::invalid_argument("logit and gold counts differ");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (gold[i] < 0 || gold[i] >= static_cast<int>(logits[i].size()))
            throw LabelOutOfRange("gold label " + std::to_string(gold[i]) + " outside head");
        std::vector<double> probs = temperature_softmax(logits[i], t);
        total += -std::log(std::max(probs[gold[i]], 1e-300));
    }
    return total / static_cast<double>(logits.size());
}

double fit_temperature(const std::vector<std::vector<double>>& logits,
                       const std::vector<int>& gold) {
    if (logits.empty()) throw EmptyCalibration("no calibration logits");
    double best_t = 1.0;
    double best_nll = mean_nll(logits, gold, 1.0);
    // Grid i/20 covers [0.05, 10] and lands on 1.0 exactly at i = 20.
    for (int i = 1; i <= 200; ++i) {
        double t = static_cast<double>(i) / 20.0;
        double nll = mean_nll(logits, gold, t);
        if (nll < best_nll - 1e-12 ||
            (nll <= best_nll + 1e-12 && std::abs(t - 1.0) < std::abs(best_t - 1.0))) {
            best_t = t;
            best_nll = std::min(best_nll, nll);
        }
    }
    return best_t;
}

double giq_score(const std::vector<double>& probs, int label) {
    check_distribution(probs);
    if (label < 0 || label >= static_cast<int>(probs.size()))
        throw LabelOutOfRange("label " + std::to_string(label) + " outside distribution");
    double mass = 0.0;
    for (int idx : descending_order(probs)) {
        mass += probs[idx];
        if (idx == label) return std::min(mass, 1.0);
    }
    return 1.0;
}

double conformal_threshold(const std::vector<double>& scores, double epsilon) {
    if (scores.empty()) throw EmptyCalibration("no calibration scores");
    if (epsilon <= 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("epsilon outside (0, 1)");
    auto m = scores.size();
    double exact = static_cast<double>(m + 1) * (1.0 - epsilon);
    auto index = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    if (index > m) return 1.0;
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    return sorted[index - 1];
}

PredictionSet predict_set(const std::vector<double>& probs, double threshold) {
    check_distribution(probs);
    if (threshold < 0.0 || threshold > 1.0)
        throw std::invalid_argument("threshold outside [0, 1]");
    PredictionSet out;
    double mass = 0.0;
    for (int idx : descending_order(probs)) {
        if (!out.labels.empty() && (mass >= threshold - 1e-12 || probs[idx] <= 0.0)) break;
        out.labels.push_back(idx);
        out.probabilities.push_back(probs[idx]);
        mass += probs[idx];
    }
    return out;
}

CalibrationArtifact calibrate_heads(const std::vector<std::vector<double>>& what_logits,
                                    const std::vector<int>& what_gold,
                                    const std::vector<std::vector<double>>& why_logits,
                                    const std::vector<int>& why_gold,
                                    double epsilon) {
    if (what_logits.size() != why_logits.size())
        throw std::invalid_argument("head calibration sets differ in size");
    CalibrationArtifact a;
    a.epsilon = epsilon;
    a.calibration_size = static_cast<int>(what_logits.size());
    a.t_what = fit_temperature(what_logits, what_gold);
    a.t_why = fit_temperature(why_logits, why_gold);

    auto head_threshold = [epsilon](const std::vector<std::vector<double>>& logits,
                                    const std::vector<int>& gold, double t) {
        std::vector<double> scores;
        scores.reserve(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i)
            scores.push_back(giq_score(temperature_softmax(logits[i], t), gold[i]));
        return conformal_threshold(scores, epsilon);
    };
    a.threshold_what = head_threshold(what_logits, what_gold, a.t_what);
    a.threshold_why = head_threshold(why_logits, why_gold, a.t_why);
    a.validate();
    return a;
}

PredictionSet conformal_predict(const std::vector<double>& logits, double t, double threshold) {
    return predict_set(temperature_softmax(logits, t), threshold);
}

}  // namespace gounsafe
