#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sems/common.hpp"

namespace sems {

struct ClassificationReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;
    std::vector<std::vector<int>> confusion;  // [true][predicted]
};

inline ClassificationReport classification_report(const std::vector<int>& predictions,
                                                  const std::vector<int>& labels, int n_classes) {
    require(!labels.empty(), "classification_report: empty input");
    require(predictions.size() == labels.size(), "classification_report: length mismatch");
    ClassificationReport rep;
    rep.confusion.assign(n_classes, std::vector<int>(n_classes, 0));
    int correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] >= 0 && labels[i] < n_classes, "classification_report: label out of range");
        require(predictions[i] >= 0 && predictions[i] < n_classes,
                "classification_report: prediction out of range");
        rep.confusion[labels[i]][predictions[i]] += 1;
        if (labels[i] == predictions[i]) ++correct;
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    rep.per_class_f1.assign(n_classes, 0.0);
    for (int c = 0; c < n_classes; ++c) {
        int tp = rep.confusion[c][c];
        int pred_c = 0, true_c = 0;
        for (int k = 0; k < n_classes; ++k) {
            pred_c += rep.confusion[k][c];
            true_c += rep.confusion[c][k];
        }
        double precision = pred_c > 0 ? static_cast<double>(tp) / pred_c : 0.0;
        double recall = true_c > 0 ? static_cast<double>(tp) / true_c : 0.0;
        rep.per_class_f1[c] =
            precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        rep.macro_f1 += rep.per_class_f1[c] / n_classes;
    }
    return rep;
}

struct DelayErrorReport {
    double mae_bins = 0.0;
    double mae_seconds = 0.0;
    int count = 0;
};

inline DelayErrorReport delay_report(const std::vector<double>& estimates,
                                     const std::vector<double>& truths, double grid_spacing) {
    require(!truths.empty(), "delay_report: empty input");
    require(estimates.size() == truths.size(), "delay_report: length mismatch");
    require(grid_spacing > 0.0, "delay_report: grid spacing must be positive");
    DelayErrorReport rep;
    rep.count = static_cast<int>(truths.size());
    for (size_t i = 0; i < truths.size(); ++i)
        rep.mae_seconds += std::abs(estimates[i] - truths[i]) / rep.count;
    rep.mae_bins = rep.mae_seconds / grid_spacing;
    return rep;
}

/// Trace ratio of between-class to pooled within-class scatter of latent
/// features; +infinity when the within-class scatter vanishes.
inline double discriminative_gain(const std::vector<std::vector<double>>& features,
                                  const std::vector<int>& labels) {
    require(features.size() == labels.size() && !features.empty(), "discriminative_gain: bad input");
    const int dim = static_cast<int>(features[0].size());
    int n_classes = 0;
    for (int l : labels) n_classes = std::max(n_classes, l + 1);
    std::vector<int> counts(n_classes, 0);
    for (int l : labels) counts[l] += 1;
    int present = 0;
    for (int c : counts)
        if (c > 0) {
            require(c >= 2, "discriminative_gain: every present class needs >= 2 samples");
            ++present;
        }
    require(present >= 2, "discriminative_gain: need at least two classes");

    std::vector<std::vector<double>> class_mean(n_classes, std::vector<double>(dim, 0.0));
    std::vector<double> global_mean(dim, 0.0);
    for (size_t i = 0; i < features.size(); ++i)
        for (int d = 0; d < dim; ++d) {
            class_mean[labels[i]][d] += features[i][d] / counts[labels[i]];
            global_mean[d] += features[i][d] / static_cast<double>(features.size());
        }

    double trace_between = 0.0, trace_within = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        if (counts[c] == 0) continue;
        for (int d = 0; d < dim; ++d) {
            double diff = class_mean[c][d] - global_mean[d];
            trace_between += counts[c] * diff * diff;
        }
    }
    for (size_t i = 0; i < features.size(); ++i)
        for (int d = 0; d < dim; ++d) {
            double diff = features[i][d] - class_mean[labels[i]][d];
            trace_within += diff * diff;
        }
    if (trace_within <= 0.0) return std::numeric_limits<double>::infinity();
    return trace_between / trace_within;
}

}  // namespace sems
