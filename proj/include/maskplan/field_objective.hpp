#pragma once

#include <vector>

#include "maskplan/model.hpp"
#include "maskplan/scene_sim.hpp"

namespace maskplan {

// Per-waypoint H x W spatial distributions built from the coordinate-token
// marginals: grid(iy, ix) = p_y[iy] * p_x[ix], each grid summing to 1.
struct SpatialDistribution {
    int height = 0;
    int width = 0;
    std::vector<Mat> grids;  // one per waypoint
};

// Outer product of the softmaxed axis marginals of waypoint t (positions 2t
// and 2t+1). The coordinate lattice must match (H, W) = (bins_y, bins_x).
Mat waypoint_distribution(const Mat& logits, int waypoint, const Vocabulary& v);
SpatialDistribution waypoint_distribution_all(const Mat& logits, const Vocabulary& v);

// Field-weighted log barrier: sum_t sum_ij -log(1 - p_t[i,j]) * C[i,j].
// p is clamped to 1 - 1e-6 before the log; `saturations`, when non-null,
// counts clamped cells.
double field_loss(const SpatialDistribution& dist, const CostField& field,
                  int* saturations = nullptr);

// Fused training path: same value as field_loss over the distributions implied
// by `logits`, plus gradient accumulation (scaled by `weight`) into d_logits.
double field_loss_grad(const Mat& logits, const CostField& field, const Vocabulary& v,
                       Mat* d_logits, double weight, int* saturations = nullptr);

}  // namespace maskplan
