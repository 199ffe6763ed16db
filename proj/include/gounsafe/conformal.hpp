#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gounsafe {

class LabelOutOfRange : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyCalibration : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CalibrationArtifact {
    double t_what = 1.0;
    double t_why = 1.0;
    double threshold_what = 1.0;
    double threshold_why = 1.0;
    double epsilon = 0.1;
    int calibration_size = 0;

    void validate() const;
    std::string to_json() const;
    static CalibrationArtifact from_json(const std::string& text);
    bool operator==(const CalibrationArtifact&) const = default;
};

struct PredictionSet {
    std::vector<int> labels;
    std::vector<double> probabilities;
};

std::vector<double> temperature_softmax(const std::vector<double>& logits, double t);

double mean_nll(const std::vector<std::vector<double>>& logits, const std::vector<int>& gold,
                double t);

double fit_temperature(const std::vector<std::vector<double>>& logits,
                       const std::vector<int>& gold);

double giq_score(const std::vector<double>& probs, int label);

double conformal_threshold(const std::vector<double>& scores, double epsilon);

PredictionSet predict_set(const std::vector<double>& probs, double threshold);

// Fits both heads on held-out calibration logits: temperature first, then
// the conformal threshold over the calibrated scores.
CalibrationArtifact calibrate_heads(const std::vector<std::vector<double>>& what_logits,
                                    const std::vector<int>& what_gold,
                                    const std::vector<std::vector<double>>& why_logits,
                                    const std::vector<int>& why_gold,
                                    double epsilon = 0.1);

PredictionSet conformal_predict(const std::vector<double>& logits, double t, double threshold);

}  // namespace gounsafe
