#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "clearway/errors.hpp"

namespace clearway {

struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::size_t total() const { return tp + tn + fp + fn; }
};

// Positive class is 1 = short incident.
inline ConfusionCounts confusion(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred) {
    if (y_true.size() != y_pred.size()) throw LengthMismatch();
    ConfusionCounts c;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if ((t != 0 && t != 1) || (p != 0 && p != 1)) throw NonBinary();
        if (t == 1 && p == 1) ++c.tp;
        else if (t == 0 && p == 0) ++c.tn;
        else if (t == 0 && p == 1) ++c.fp;
        else ++c.fn;
    }
    return c;
}

struct ClassificationScores {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // Degenerate denominators are reported as 0 with the flag set, so that
    // cross-validation folds never abort on an all-one-class prediction.
    bool precision_defined = true;
    bool recall_defined = true;
};

inline ClassificationScores classification_scores(const ConfusionCounts& c) {
    if (c.total() == 0) throw EmptyEvaluation();
    ClassificationScores s;
    const double tp = static_cast<double>(c.tp);
    s.accuracy = (tp + static_cast<double>(c.tn)) / static_cast<double>(c.total());
    if (c.tp + c.fp == 0) {
        s.precision_defined = false;
    } else {
        s.precision = tp / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn == 0) {
        s.recall_defined = false;
    } else {
        s.recall = tp / static_cast<double>(c.tp + c.fn);
    }
    s.f1 = (s.precision + s.recall > 0.0)
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

// Mean absolute percentage error, in percent points.
inline double mape(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
    if (y_true.size() != y_pred.size()) throw LengthMismatch();
    if (y_true.empty()) throw EmptyEvaluation();
    double acc = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (!(y_true[i] > 0.0)) throw NonPositiveTruth();
        acc += std::abs(y_true[i] - y_pred[i]) / y_true[i];
    }
    return 100.0 * acc / static_cast<double>(y_true.size());
}

inline double r2(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
    if (y_true.size() != y_pred.size()) throw LengthMismatch();
    if (y_true.size() < 2) throw EmptyEvaluation();
    double mean = 0.0;
    for (double v : y_true) mean += v;
    mean /= static_cast<double>(y_true.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
        ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
    }
    if (ss_tot == 0.0) throw ZeroVariance();
    return 1.0 - ss_res / ss_tot;
}

struct RegressionScores {
    double mape = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

inline RegressionScores regression_scores(const std::vector<double>& y_true,
                                          const std::vector<double>& y_pred) {
    RegressionScores s;
    s.mape = mape(y_true, y_pred);
    s.r2 = r2(y_true, y_pred);
    s.n = y_true.size();
    return s;
}

}  // namespace clearway
