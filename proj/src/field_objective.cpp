#include "maskplan/field_objective.hpp"

#include <cmath>

#include "maskplan/errors.hpp"

namespace maskplan {

namespace {

constexpr double kBarrierClamp = 1.0 - 1e-6;

Eigen::VectorXd softmax_segment(const Mat& logits, int row, int lo, int n) {
    Eigen::VectorXd out(n);
    double mx = -1e300;
    for (int i = 0; i < n; ++i) mx = std::max(mx, logits(row, lo + i));
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        out(i) = std::exp(logits(row, lo + i) - mx);
        z += out(i);
    }
    out /= z;
    return out;
}

}  // namespace

Mat waypoint_distribution(const Mat& logits, int waypoint, const Vocabulary& v) {
    if (waypoint < 0 || waypoint >= kWaypoints)
        throw ContractError("waypoint_distribution: waypoint index");
    if (logits.rows() != kActionLen || logits.cols() != v.coord_vocab())
        throw ConfigError("waypoint_distribution: logits do not match the coordinate lattice");
    Eigen::VectorXd px = softmax_segment(logits, 2 * waypoint, 0, v.bins_x());
    Eigen::VectorXd py = softmax_segment(logits, 2 * waypoint + 1, v.bins_x(), v.bins_y());
    Mat grid(v.bins_y(), v.bins_x());
    for (int iy = 0; iy < v.bins_y(); ++iy)
        for (int ix = 0; ix < v.bins_x(); ++ix) grid(iy, ix) = py(iy) * px(ix);
    return grid;
}

SpatialDistribution waypoint_distribution_all(const Mat& logits, const Vocabulary& v) {
    SpatialDistribution d;
    d.height = v.bins_y();
    d.width = v.bins_x();
    for (int t = 0; t < kWaypoints; ++t)
        d.grids.push_back(waypoint_distribution(logits, t, v));
    return d;
}

double field_loss(const SpatialDistribution& dist, const CostField& field, int* saturations) {
    if (dist.height != field.height || dist.width != field.width)
        throw ConfigError("field_loss: distribution and cost field shapes differ");
    double loss = 0.0;
    int sat = 0;
    for (const Mat& grid : dist.grids) {
        for (int iy = 0; iy < field.height; ++iy) {
            for (int ix = 0; ix < field.width; ++ix) {
                double c = field.at(iy, ix);
                if (c == 0.0) continue;
                double p = grid(iy, ix);
                if (p > kBarrierClamp) {
                    p = kBarrierClamp;
                    ++sat;
                }
                loss += -std::log1p(-p) * c;
            }
        }
    }
    if (saturations) *saturations = sat;
    return loss;
}

double field_loss_grad(const Mat& logits, const CostField& field, const Vocabulary& v,
                       Mat* d_logits, double weight, int* saturations) {
    if (field.height != v.bins_y() || field.width != v.bins_x())
        throw ConfigError("field_loss_grad: cost field does not match the coordinate lattice");
    double loss = 0.0;
    int sat = 0;
    for (int t = 0; t < kWaypoints; ++t) {
        Eigen::VectorXd px = softmax_segment(logits, 2 * t, 0, v.bins_x());
        Eigen::VectorXd py = softmax_segment(logits, 2 * t + 1, v.bins_x(), v.bins_y());
        Eigen::VectorXd dpx = Eigen::VectorXd::Zero(v.bins_x());
        Eigen::VectorXd dpy = Eigen::VectorXd::Zero(v.bins_y());
        for (int iy = 0; iy < field.height; ++iy) {
            double pyv = py(iy);
            for (int ix = 0; ix < field.width; ++ix) {
                double c = field.at(iy, ix);
                if (c == 0.0) continue;
                double p = pyv * px(ix);
                if (p > kBarrierClamp) {
                    loss += -std::log1p(-kBarrierClamp) * c;
                    ++sat;  // clamped: treated as constant, no gradient
                    continue;
                }
                loss += -std::log1p(-p) * c;
                if (d_logits) {
                    double a = c / (1.0 - p);
                    dpx(ix) += pyv * a;
                    dpy(iy) += px(ix) * a;
                }
            }
        }
        if (d_logits) {
            // Softmax Jacobian per axis row.
            double dotx = dpx.dot(px);
            for (int ix = 0; ix < v.bins_x(); ++ix)
                (*d_logits)(2 * t, ix) += weight * px(ix) * (dpx(ix) - dotx);
            double doty = dpy.dot(py);
            for (int iy = 0; iy < v.bins_y(); ++iy)
                (*d_logits)(2 * t + 1, v.bins_x() + iy) += weight * py(iy) * (dpy(iy) - doty);
        }
    }
    if (saturations) *saturations = sat;
    return loss;
}

}  // namespace maskplan
