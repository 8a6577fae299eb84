#pragma once

// Evaluation measures: mean per-joint/vertex position error, its
// Procrustes-aligned variant, temporal acceleration, PCK area-under-curve,
// and a nearest-neighbor mesh F-score. All distances are in the caller's
// units (mm by convention).

#include <string>
#include <vector>

#include "hmr/tensor.hpp"

namespace hmr {

// Mean Euclidean distance over rows of [N,3] (or [N,2]) point sets.
double mpjpe(const TensorD& p, const TensorD& g);

// MPJPE after similarity alignment of p onto g (rotation + translation,
// optionally scale; reflections are never allowed). Throws on degenerate
// (collinear or near-collinear) point sets.
double pa_mpjpe(const TensorD& p, const TensorD& g, bool with_scale = true);

// Ordered landmark frames at a fixed interval.
struct SequenceTrack {
    std::vector<TensorD> frames;  // each [N,D], identical shapes
    double dt = 1.0;              // seconds
};

// Mean second-difference magnitude ||x_{t+1} - 2 x_t + x_{t-1}|| / dt^2,
// averaged over joints and interior frames. Needs >= 3 frames.
double acc(const SequenceTrack& track);

// Area under the PCK curve over thresholds [lo, hi], trapezoidal rule with
// `steps` sample points, normalized to [0,1].
double auc_pck(const std::vector<double>& errors, double lo, double hi = 50.0, int steps = 100);

// PCK at a single threshold: fraction of errors <= threshold.
double pck(const std::vector<double>& errors, double threshold);

// Harmonic mean of precision and recall under symmetric nearest-neighbor
// matching of vertex sets [V,3] at the given distance threshold.
double f_score(const TensorD& pred, const TensorD& gt, double threshold);

struct MetricReport {
    double mpjpe = 0, pa_mpjpe = 0, acc = 0, auc = 0, f5 = 0, f15 = 0;

    std::string to_csv() const;
    std::string to_json() const;
};

// (threshold, fraction) rows for offline plotting.
std::string pck_curve_csv(const std::vector<double>& errors, double lo, double hi, int steps);

}  // namespace hmr
