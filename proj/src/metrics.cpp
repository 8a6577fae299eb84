#include "hmr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace hmr {

namespace {

void require_point_sets(const TensorD& p, const TensorD& g, const char* who) {
    if (p.ndim() != 2 || g.ndim() != 2 || p.shape != g.shape || (p.dim(1) != 2 && p.dim(1) != 3))
        throw std::invalid_argument(std::string(who) + ": expected matching [N,2] or [N,3] point sets, got " +
                                    p.shape_str() + " vs " + g.shape_str());
    if (p.dim(0) == 0) throw std::invalid_argument(std::string(who) + ": empty point set");
}

Eigen::MatrixXd as_cols(const TensorD& t) {
    Eigen::MatrixXd m(t.dim(1), t.dim(0));
    for (int i = 0; i < t.dim(0); ++i)
        for (int d = 0; d < t.dim(1); ++d) m(d, i) = t.at({i, d});
    return m;
}

}  // namespace

double mpjpe(const TensorD& p, const TensorD& g) {
    require_point_sets(p, g, "mpjpe");
    const int n = p.dim(0), d = p.dim(1);
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int k = 0; k < d; ++k) {
            const double diff = p.at({i, k}) - g.at({i, k});
            s += diff * diff;
        }
        acc += std::sqrt(s);
    }
    return acc / n;
}

double pa_mpjpe(const TensorD& p, const TensorD& g, bool with_scale) {
    require_point_sets(p, g, "pa_mpjpe");
    const int n = p.dim(0), d = p.dim(1);
    if (n < 3) throw std::invalid_argument("pa_mpjpe: need at least 3 points");

    Eigen::MatrixXd src = as_cols(p), dst = as_cols(g);
    // degenerate sets (all points on a line) have no unique rotation
    Eigen::MatrixXd centered = src.colwise() - src.rowwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    if (svd.singularValues()(1) < 1e-9 * (svd.singularValues()(0) + 1e-300))
        throw std::invalid_argument("pa_mpjpe: degenerate (collinear) prediction");

    // similarity transform minimizing ||(s R src + t) - dst||, reflection-free
    Eigen::MatrixXd tf = Eigen::umeyama(src, dst, with_scale);
    Eigen::MatrixXd aligned = (tf.topLeftCorner(d, d) * src).colwise() + tf.topRightCorner(d, 1).col(0);

    double acc = 0;
    for (int i = 0; i < n; ++i) acc += (aligned.col(i) - dst.col(i)).norm();
    return acc / n;
}

double acc(const SequenceTrack& track) {
    if (track.frames.size() < 3) throw std::invalid_argument("acc: need at least 3 frames");
    if (track.dt <= 0) throw std::invalid_argument("acc: frame interval must be positive");
    const auto& shape = track.frames.front().shape;
    for (const auto& f : track.frames)
        if (f.shape != shape || f.ndim() != 2)
            throw std::invalid_argument("acc: frames must share one [N,D] shape");
    const int n = track.frames.front().dim(0), d = track.frames.front().dim(1);
    const double inv_dt2 = 1.0 / (track.dt * track.dt);
    double total = 0;
    for (std::size_t t = 1; t + 1 < track.frames.size(); ++t) {
        const auto& a = track.frames[t - 1];
        const auto& b = track.frames[t];
        const auto& c = track.frames[t + 1];
        for (int i = 0; i < n; ++i) {
            double s = 0;
            for (int k = 0; k < d; ++k) {
                const double dd = c.at({i, k}) - 2.0 * b.at({i, k}) + a.at({i, k});
                s += dd * dd;
            }
            total += std::sqrt(s) * inv_dt2;
        }
    }
    return total / (static_cast<double>(track.frames.size() - 2) * n);
}

double pck(const std::vector<double>& errors, double threshold) {
    if (errors.empty()) throw std::invalid_argument("pck: empty error list");
    std::size_t hit = 0;
    for (double e : errors)
        if (e <= threshold) ++hit;
    return static_cast<double>(hit) / static_cast<double>(errors.size());
}

double auc_pck(const std::vector<double>& errors, double lo, double hi, int steps) {
    if (steps < 2) throw std::invalid_argument("auc_pck: need at least 2 threshold samples");
    if (!(hi > lo)) throw std::invalid_argument("auc_pck: hi must exceed lo");
    double area = 0;
    double prev = pck(errors, lo);
    for (int s = 1; s < steps; ++s) {
        const double th = lo + (hi - lo) * s / (steps - 1);
        const double cur = pck(errors, th);
        area += 0.5 * (prev + cur);
        prev = cur;
    }
    return area / (steps - 1);  // trapezoid over a unit-normalized threshold axis
}

double f_score(const TensorD& pred, const TensorD& gt, double threshold) {
    if (pred.ndim() != 2 || gt.ndim() != 2 || pred.dim(1) != 3 || gt.dim(1) != 3)
        throw std::invalid_argument("f_score: expected [V,3] vertex sets");
    if (pred.dim(0) == 0 || gt.dim(0) == 0) throw std::invalid_argument("f_score: empty mesh");
    if (threshold <= 0) throw std::invalid_argument("f_score: threshold must be positive");

    auto covered = [threshold](const TensorD& a, const TensorD& b) {
        // fraction of rows of a within threshold of the nearest row of b
        int hit = 0;
        for (int i = 0; i < a.dim(0); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < b.dim(0); ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) {
                    const double d = a.at({i, k}) - b.at({j, k});
                    s += d * d;
                }
                best = std::min(best, s);
            }
            if (std::sqrt(best) <= threshold) ++hit;
        }
        return static_cast<double>(hit) / a.dim(0);
    };
    const double precision = covered(pred, gt);
    const double recall = covered(gt, pred);
    if (precision + recall == 0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::string MetricReport::to_csv() const {
    return "mpjpe,pa_mpjpe,acc,auc,f5,f15\n" + std::to_string(mpjpe) + "," + std::to_string(pa_mpjpe) +
           "," + std::to_string(acc) + "," + std::to_string(auc) + "," + std::to_string(f5) + "," +
           std::to_string(f15) + "\n";
}

std::string MetricReport::to_json() const {
    return "{\"mpjpe\": " + std::to_string(mpjpe) + ", \"pa_mpjpe\": " + std::to_string(pa_mpjpe) +
           ", \"acc\": " + std::to_string(acc) + ", \"auc\": " + std::to_string(auc) +
           ", \"f5\": " + std::to_string(f5) + ", \"f15\": " + std::to_string(f15) + "}";
}

std::string pck_curve_csv(const std::vector<double>& errors, double lo, double hi, int steps) {
    std::string out = "threshold,fraction\n";
    for (int s = 0; s < steps; ++s) {
        const double th = lo + (hi - lo) * s / (steps - 1);
        out += std::to_string(th) + "," + std::to_string(pck(errors, th)) + "\n";
    }
    return out;
}

}  // namespace hmr
