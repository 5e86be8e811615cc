#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <string>

namespace flhom {

/// Residual vector r(x) and (optionally) its Jacobian dr/dx.
struct LmProblem {
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residuals;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian; // central differences when empty
};

struct LmOptions {
    std::size_t max_iterations = 200;
    double tolerance = 1e-10; // relative decrease of the cost between accepted steps
    double fd_step = 1e-6;    // relative central-difference step
};

struct LmResult {
    Eigen::VectorXd x;
    double cost = 0.0; // 0.5 * |r|^2
    std::size_t iterations = 0;
    bool converged = false;
    std::string message;
};

Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double rel_step = 1e-6);

/// Levenberg-Marquardt with Marquardt diagonal scaling. Never throws for non-convergence:
/// inspect `converged`; `x` is the best point seen.
LmResult levenberg_marquardt(const LmProblem& problem, Eigen::VectorXd x0, const LmOptions& options = {});

} // namespace flhom
