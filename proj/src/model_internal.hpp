#pragma once

#include <cmath>

#include "maskplan/model.hpp"

// Forward-pass primitives shared by the full forward (model.cpp) and the
// cached decode path (runtime.cpp). Keeping one definition is what makes the
// cache-vs-full equivalence tight.
namespace maskplan::detail {

inline constexpr double kRmsEps = 1e-8;
inline constexpr double kMaskedScore = -1e30;

inline void rmsnorm(const Mat& x, const Mat& g, Mat& y, Vec& rms) {
    const int d = static_cast<int>(x.cols());
    y.resize(x.rows(), d);
    rms.resize(x.rows());
    for (int r = 0; r < x.rows(); ++r) {
        double ms = x.row(r).squaredNorm() / d;
        double rr = std::sqrt(ms + kRmsEps);
        rms(r) = rr;
        y.row(r) = x.row(r).cwiseProduct(g.row(0)) / rr;
    }
}

inline void softmax_rows(Mat& m) {
    for (int r = 0; r < m.rows(); ++r) {
        double mx = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - mx).exp();
        m.row(r) /= m.row(r).sum();
    }
}

}  // namespace maskplan::detail
