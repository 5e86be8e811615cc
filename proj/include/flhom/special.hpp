#pragma once

namespace flhom {

// Scaled complementary error function exp(x^2) * erfc(x).
double erfcx(double x);

} // namespace flhom
