#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace flhom {

/// Affine-invariant ensemble sampler with the stretch move. Walkers are split in two halves;
/// each half is proposed against the other with all random numbers drawn before any
/// log-probability is evaluated, so evaluation order never changes the chain.
struct EnsembleOptions {
    std::size_t steps = 2000;
    double stretch_scale = 2.0;
    std::uint64_t seed = 0;
};

struct EnsembleChain {
    std::size_t walkers = 0;
    std::size_t steps = 0;
    std::size_t dim = 0;
    std::vector<double> positions; // [step][walker][dim]
    std::vector<double> log_prob;  // [step][walker]
    std::size_t accepted = 0;

    double at(std::size_t step, std::size_t walker, std::size_t d) const
    {
        return positions[(step * walkers + walker) * dim + d];
    }
    double acceptance_fraction() const
    {
        return steps * walkers == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(steps * walkers);
    }
};

using LogProbability = std::function<double(std::span<const double>)>;

/// `initial` holds one starting point per walker; needs an even walker count >= 2 * dim
/// and finite log-probability at every start.
EnsembleChain run_ensemble(const LogProbability& log_prob, const std::vector<std::vector<double>>& initial,
                           const EnsembleOptions& options);

} // namespace flhom
