#include "druid/state.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace druid {

HyperParams HyperParams::uniform(std::size_t n, double eps, int load, double p)
{
    HyperParams hp;
    hp.eps.assign(n, eps);
    hp.loads.assign(n, load);
    hp.participation.assign(n, p);
    return hp;
}

double HyperParams::p_min() const
{
    return participation.empty() ? 0.0 : *std::min_element(participation.begin(), participation.end());
}

void HyperParams::validate(std::size_t n) const
{
    auto fail = [](const std::string& what) { throw std::invalid_argument("hyperparameters: " + what); };
    if (!(mu_z > 0.0))
        fail("mu_z must be positive");
    if (!(mu_theta > 0.0))
        fail("mu_theta must be positive");
    if (gamma < 0.0)
        fail("gamma must be non-negative");
    if (ridge < 0.0)
        fail("ridge must be non-negative");
    if (eps.size() != n || loads.size() != n || participation.size() != n)
        fail("per-agent vectors must have one entry per agent (" + std::to_string(n) + ")");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(eps[i] > 0.0))
            fail("eps[" + std::to_string(i) + "] must be positive");
        if (loads[i] < 1)
            fail("E[" + std::to_string(i) + "] must be at least 1");
        if (!(participation[i] > 0.0 && participation[i] <= 1.0))
            fail("p[" + std::to_string(i) + "] must lie in (0, 1]");
    }
    if (q >= n)
        fail("regularizer agent q out of range");
    if (batch_g == 0 || batch_h == 0)
        fail("batch sizes must be positive");
}

}  // namespace druid
