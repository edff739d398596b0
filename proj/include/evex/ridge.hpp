#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "evex/error.hpp"

namespace evex {

struct RidgeFit {
    std::vector<double> coefficients;
    double intercept = 0.0;
    /// Weighted coefficient of determination; 0 when the weighted variance of y is 0.
    double r2 = 0.0;
};

/**
 * Minimizes sum_i w_i (y_i - b0 - X_i b)^2 + alpha |b|^2 with an unpenalized
 * intercept. The problem is solved on weighted-mean-centred data, which
 * removes the intercept from the linear system.
 */
inline RidgeFit fit_weighted_ridge(const Eigen::MatrixXd& x, std::span<const double> y, std::span<const double> w,
                                   double alpha)
{
    const auto n = x.rows();
    const auto k = x.cols();
    if (n < 2) throw ValidationError("ridge regression needs at least 2 samples");
    if (k < 1) throw ValidationError("ridge regression needs at least 1 feature");
    if (static_cast<Eigen::Index>(y.size()) != n || static_cast<Eigen::Index>(w.size()) != n)
        throw ValidationError("ridge regression inputs have mismatched lengths");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("ridge alpha must be finite and >= 0");

    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
    const Eigen::Map<const Eigen::VectorXd> wv(w.data(), n);
    if (!wv.allFinite() || (wv.array() < 0.0).any()) throw ValidationError("sample weights must be finite and >= 0");
    if (!yv.allFinite() || !x.allFinite()) throw ValidationError("ridge regression inputs must be finite");
    const double total = wv.sum();
    if (!(total > 0.0)) throw ValidationError("sample weights must not all be zero");

    const Eigen::RowVectorXd x_mean = (wv.transpose() * x) / total;
    // An exactly constant target must centre to exact zeros so that R^2 = 0.
    const bool constant_target = (yv.array() == yv(0)).all();
    const double y_mean = constant_target ? yv(0) : wv.dot(yv) / total;
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = yv.array() - y_mean;

    const Eigen::MatrixXd xw = wv.asDiagonal() * xc;
    Eigen::MatrixXd gram = xc.transpose() * xw;
    gram.diagonal().array() += alpha;
    const Eigen::VectorXd rhs = xw.transpose() * yc;

    Eigen::VectorXd beta;
    if (alpha > 0.0)
        beta = gram.ldlt().solve(rhs);
    else
        beta = gram.completeOrthogonalDecomposition().solve(rhs); // minimum-norm if rank deficient

    RidgeFit fit;
    fit.coefficients.assign(beta.data(), beta.data() + k);
    fit.intercept = y_mean - x_mean.dot(beta);

    const Eigen::VectorXd residual = yc - xc * beta;
    const double ss_res = (wv.array() * residual.array().square()).sum();
    const double ss_tot = (wv.array() * yc.array().square()).sum();
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
    return fit;
}

} // namespace evex
