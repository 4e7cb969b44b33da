#pragma once

// Small dense Levenberg–Marquardt solver for problems with a handful of
// parameters.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>

namespace opg {

struct LmOptions {
    int max_iterations = 200;
    /// Converged when ‖Δp‖ ≤ tolerance·max(1, ‖p‖).
    double step_tolerance = 1e-9;
    double initial_damping = 1e-3;
    /// Relative step of the forward-difference Jacobian when none is given.
    double fd_step = 1e-7;
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd jacobian;  ///< at params
    double cost = 0.0;         ///< ½‖r‖²
    int iterations = 0;
    bool converged = false;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

inline Eigen::MatrixXd forward_difference_jacobian(const ResidualFn& f, const Eigen::VectorXd& p,
                                                   const Eigen::VectorXd& r0, double rel_step) {
    Eigen::MatrixXd J(r0.size(), p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        Eigen::VectorXd q = p;
        const double h = rel_step * std::max(1.0, std::abs(p[k]));
        q[k] += h;
        J.col(k) = (f(q) - r0) / h;
    }
    return J;
}

/// Minimizes ½‖r(p)‖² with Marquardt diagonal scaling.
inline LmResult levenberg_marquardt(const ResidualFn& residual, Eigen::VectorXd p, const LmOptions& opt = {},
                                    const JacobianFn& jacobian = {}) {
    auto jac = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& r) {
        return jacobian ? jacobian(x) : forward_difference_jacobian(residual, x, r, opt.fd_step);
    };

    LmResult res;
    Eigen::VectorXd r = residual(p);
    double cost = 0.5 * r.squaredNorm();
    Eigen::MatrixXd J = jac(p, r);
    double lambda = opt.initial_damping;

    for (int it = 1; it <= opt.max_iterations; ++it) {
        res.iterations = it;
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        bool accepted = false;
        Eigen::VectorXd step;
        for (int tries = 0; tries < 60; ++tries) {
            Eigen::MatrixXd A = JtJ;
            for (Eigen::Index k = 0; k < A.rows(); ++k) A(k, k) += lambda * std::max(JtJ(k, k), 1e-300);
            step = A.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd p_new = p + step;
            const Eigen::VectorXd r_new = residual(p_new);
            const double cost_new = r_new.allFinite() ? 0.5 * r_new.squaredNorm() : HUGE_VAL;
            if (cost_new < cost) {
                p = p_new;
                r = r_new;
                cost = cost_new;
                lambda = std::max(lambda * 0.3, 1e-15);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if (accepted) J = jac(p, r);
        const bool small_step = step.allFinite() && step.norm() <= opt.step_tolerance * std::max(1.0, p.norm());
        if (small_step || !accepted) {
            // No decrease even at enormous damping: stationary to working precision.
            res.converged = true;
            break;
        }
    }
    res.params = p;
    res.residuals = r;
    res.jacobian = J;
    res.cost = cost;
    return res;
}

}  // namespace opg
