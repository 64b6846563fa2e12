#pragma once

#include <ostream>
#include <span>
#include <string>

#include "coprou/field.hpp"

namespace coprou {

/// Maps x in [0, 1] onto depth in [0.1, 100].
inline constexpr double kDefaultDisparityA = 1.0 / 0.1 - 1.0 / 100.0;
inline constexpr double kDefaultDisparityB = 1.0 / 100.0;

/// D = 1 / (a x + b). Throws NonPositiveDenominator if a x + b <= 0 anywhere.
ScalarField disparity_to_depth(const ScalarField& x, double a = kDefaultDisparityA,
                               double b = kDefaultDisparityB);

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 2 on usage errors and 1 on domain errors; errors are reported on
/// `err` as a single "error: <Kind>: <message>" line.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace coprou
