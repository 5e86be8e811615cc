#include "flhom/levenberg_marquardt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flhom {

Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double rel_step)
{
    Eigen::MatrixXd j;
    Eigen::VectorXd xp = x;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = rel_step * std::max(1.0, std::abs(x[k]));
        xp[k] = x[k] + h;
        const Eigen::VectorXd fp = f(xp);
        xp[k] = x[k] - h;
        const Eigen::VectorXd fm = f(xp);
        xp[k] = x[k];
        if (j.size() == 0) {
            j.resize(fp.size(), x.size());
        }
        j.col(k) = (fp - fm) / (2.0 * h);
    }
    return j;
}

LmResult levenberg_marquardt(const LmProblem& problem, Eigen::VectorXd x0, const LmOptions& options)
{
    auto jac = [&](const Eigen::VectorXd& x) {
        return problem.jacobian ? problem.jacobian(x) : numeric_jacobian(problem.residuals, x, options.fd_step);
    };

    LmResult out;
    out.x = std::move(x0);
    Eigen::VectorXd r = problem.residuals(out.x);
    out.cost = 0.5 * r.squaredNorm();
    if (!std::isfinite(out.cost)) {
        out.message = "non-finite residuals at the starting point";
        return out;
    }

    const Eigen::Index n = out.x.size();
    Eigen::VectorXd scale = Eigen::VectorXd::Zero(n);
    double lambda = -1.0;

    for (std::size_t it = 1; it <= options.max_iterations; ++it) {
        out.iterations = it;
        const Eigen::MatrixXd j = jac(out.x);
        const Eigen::MatrixXd a = j.transpose() * j;
        const Eigen::VectorXd g = j.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() <= 1e-15 * std::max(1.0, out.cost)) {
            out.converged = true;
            out.message = "gradient vanished";
            return out;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            scale[k] = std::max(scale[k], a(k, k));
        }
        const double scale_floor = 1e-12 * std::max(1.0, scale.maxCoeff());
        if (lambda < 0.0) {
            lambda = 1e-3;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
            Eigen::MatrixXd damped = a;
            for (Eigen::Index k = 0; k < n; ++k) {
                damped(k, k) += lambda * std::max(scale[k], scale_floor);
            }
            const Eigen::VectorXd step = damped.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd x_new = out.x + step;
            const Eigen::VectorXd r_new = problem.residuals(x_new);
            const double cost_new = 0.5 * r_new.squaredNorm();
            const bool tiny_step = step.norm() <= 1e-14 * (out.x.norm() + 1e-14);
            if (std::isfinite(cost_new) && cost_new < out.cost) {
                const double rel = (out.cost - cost_new) / std::max(out.cost, std::numeric_limits<double>::min());
                out.x = x_new;
                r = r_new;
                out.cost = cost_new;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (rel < options.tolerance || tiny_step || cost_new <= 1e-300) {
                    out.converged = true;
                    out.message = "relative cost change below tolerance";
                    return out;
                }
            } else {
                if (tiny_step) {
                    out.converged = true;
                    out.message = "step below machine precision";
                    return out;
                }
                lambda *= 4.0;
            }
        }
        if (!accepted) {
            out.message = "damping exhausted without decreasing the cost";
            return out;
        }
    }
    out.message = "maximum iterations reached";
    return out;
}

} // namespace flhom
