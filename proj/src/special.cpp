#include "flhom/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace flhom {

double erfcx(double x)
{
    if (std::isnan(x)) {
        return x;
    }
    if (x < 5.0) {
        // exp(x^2) overflows only for x < -26.6, where the true value is infinite as well.
        return std::exp(x * x) * std::erfc(x);
    }
    if (std::isinf(x)) {
        return 0.0;
    }
    // Laplace continued fraction, evaluated bottom-up; 80 levels are below 1 ulp for x >= 5.
    double f = x;
    for (int k = 80; k >= 1; --k) {
        f = x + 0.5 * k / f;
    }
    return 1.0 / (std::sqrt(std::numbers::pi) * f);
}

} // namespace flhom
