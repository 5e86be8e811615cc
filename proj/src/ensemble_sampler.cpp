#include "flhom/ensemble_sampler.hpp"

#include "flhom/errors.hpp"
#include "flhom/rng.hpp"

#include <cmath>
#include <random>

namespace flhom {

EnsembleChain run_ensemble(const LogProbability& log_prob, const std::vector<std::vector<double>>& initial,
                           const EnsembleOptions& options)
{
    const std::size_t nw = initial.size();
    if (nw == 0) {
        throw DomainError("ensemble needs walkers");
    }
    const std::size_t dim = initial.front().size();
    if (nw % 2 != 0 || nw < 2 * dim) {
        throw DomainError("ensemble needs an even number of walkers >= 2 * dim");
    }
    if (!(options.stretch_scale > 1.0)) {
        throw DomainError("stretch scale must exceed 1");
    }

    EnsembleChain chain;
    chain.walkers = nw;
    chain.steps = options.steps;
    chain.dim = dim;
    chain.positions.resize(options.steps * nw * dim);
    chain.log_prob.resize(options.steps * nw);

    std::vector<double> x(nw * dim);
    std::vector<double> lp(nw);
    for (std::size_t k = 0; k < nw; ++k) {
        if (initial[k].size() != dim) {
            throw DomainError("walker starting points differ in dimension");
        }
        std::copy(initial[k].begin(), initial[k].end(), x.begin() + static_cast<std::ptrdiff_t>(k * dim));
        lp[k] = log_prob(std::span<const double>(x.data() + k * dim, dim));
        if (!std::isfinite(lp[k])) {
            throw NumericalError("walker " + std::to_string(k) + " starts at zero probability");
        }
    }

    Rng rng(options.seed);
    const double a = options.stretch_scale;
    const std::size_t half = nw / 2;
    struct Draw {
        std::size_t partner;
        double z;
        double log_u;
    };
    std::vector<Draw> draws(half);
    std::vector<double> proposal(dim);

    for (std::size_t step = 0; step < options.steps; ++step) {
        for (std::size_t h = 0; h < 2; ++h) {
            const std::size_t first = h * half;
            const std::size_t other = (1 - h) * half;
            for (auto& d : draws) {
                d.partner = other + std::uniform_int_distribution<std::size_t>(0, half - 1)(rng);
                const double u = rng.uniform();
                d.z = std::pow((a - 1.0) * u + 1.0, 2) / a;
                d.log_u = std::log(rng.uniform());
            }
            for (std::size_t i = 0; i < half; ++i) {
                const std::size_t k = first + i;
                const Draw& d = draws[i];
                const double* xk = x.data() + k * dim;
                const double* xj = x.data() + d.partner * dim;
                for (std::size_t c = 0; c < dim; ++c) {
                    proposal[c] = xj[c] + d.z * (xk[c] - xj[c]);
                }
                const double lp_new = log_prob(proposal);
                const double log_accept = static_cast<double>(dim - 1) * std::log(d.z) + lp_new - lp[k];
                if (std::isfinite(lp_new) && d.log_u < log_accept) {
                    std::copy(proposal.begin(), proposal.end(), x.begin() + static_cast<std::ptrdiff_t>(k * dim));
                    lp[k] = lp_new;
                    ++chain.accepted;
                }
            }
        }
        std::copy(x.begin(), x.end(), chain.positions.begin() + static_cast<std::ptrdiff_t>(step * nw * dim));
        std::copy(lp.begin(), lp.end(), chain.log_prob.begin() + static_cast<std::ptrdiff_t>(step * nw));
    }
    return chain;
}

} // namespace flhom
