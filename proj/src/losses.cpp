#include "maskplan/losses.hpp"

#include <cmath>

#include "maskplan/errors.hpp"

namespace maskplan {

namespace {

// log p[target] under a row softmax; optionally accumulates
// scale * (softmax - onehot) into the gradient expression.
template <typename L>
double row_nll(const L& logits, int target) {
    double mx = logits.maxCoeff();
    Eigen::RowVectorXd e = (logits.array() - mx).exp();
    double z = e.sum();
    return -(logits(target) - mx - std::log(z));
}

template <typename L, typename D>
double row_nll_grad(const L& logits, int target, D&& drow, double scale) {
    double mx = logits.maxCoeff();
    Eigen::RowVectorXd e = (logits.array() - mx).exp();
    double z = e.sum();
    drow += (e / z) * scale;
    drow(target) -= scale;
    return -(logits(target) - mx - std::log(z));
}

}  // namespace

double dlm_loss(const Mat& logits, const TokenSequence& x0, Mat* d_logits, double weight) {
    if (logits.rows() != kActionLen) throw ContractError("dlm_loss: logits row count");
    double total = 0.0;
    const double scale = weight / kActionLen;
    for (int i = 0; i < kActionLen; ++i) {
        int32_t tgt = x0[i];
        if (tgt < 0 || tgt >= logits.cols())
            throw ContractError("dlm_loss: target outside coordinate vocabulary");
        if (d_logits)
            total += row_nll_grad(logits.row(i), tgt, d_logits->row(i), scale);
        else
            total += row_nll(logits.row(i), tgt);
    }
    return total / kActionLen;
}

double sap_loss(const Mat& logits, const TokenSequence& x0_clean,
                const TokenSequence& perturbed_input, const Vocabulary& v,
                Mat* d_logits, double weight) {
    if (count_masks(perturbed_input, v) > 0)
        throw ContractError("sap_loss: perturbed input must be fully concrete");
    return dlm_loss(logits, x0_clean, d_logits, weight);
}

double goal_nll(const Mat& goal_logits, int32_t goal_x_token, int32_t goal_y_token,
                const Vocabulary& v, Mat* d_goal, double weight) {
    const int bx = v.bins_x(), by = v.bins_y();
    if (goal_logits.cols() != bx + by) throw ContractError("goal_nll: logit width");
    if (!v.is_x_token(goal_x_token) || !v.is_y_token(goal_y_token))
        throw ContractError("goal_nll: endpoint tokens on wrong axes");
    double loss = 0.0;
    if (d_goal) {
        loss += row_nll_grad(goal_logits.row(0).segment(0, bx), goal_x_token,
                             d_goal->row(0).segment(0, bx), weight);
        loss += row_nll_grad(goal_logits.row(0).segment(bx, by), goal_y_token - bx,
                             d_goal->row(0).segment(bx, by), weight);
    } else {
        loss += row_nll(goal_logits.row(0).segment(0, bx), goal_x_token);
        loss += row_nll(goal_logits.row(0).segment(bx, by), goal_y_token - bx);
    }
    return loss;
}

}  // namespace maskplan
