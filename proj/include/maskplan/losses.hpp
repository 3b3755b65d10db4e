#pragma once

#include "maskplan/model.hpp"

namespace maskplan {

// Mean negative log-likelihood of the clean tokens over ALL action positions
// (not only masked ones), full-vocabulary softmax per position.
// `d_logits`, when non-null, receives the gradient (accumulated, scaled by
// `weight`).
double dlm_loss(const Mat& logits, const TokenSequence& x0, Mat* d_logits = nullptr,
                double weight = 1.0);

// Same NLL, but the forward input must have been a fully concrete (perturbed)
// sequence; a masked input is a contract violation.
double sap_loss(const Mat& logits, const TokenSequence& x0_clean,
                const TokenSequence& perturbed_input, const Vocabulary& v,
                Mat* d_logits = nullptr, double weight = 1.0);

// Factorized goal NLL of the expert endpoint (x and y token of waypoint 8).
double goal_nll(const Mat& goal_logits, int32_t goal_x_token, int32_t goal_y_token,
                const Vocabulary& v, Mat* d_goal = nullptr, double weight = 1.0);

}  // namespace maskplan
