#pragma once

#include <span>
#include <string>

namespace psmc {

/// log(sum(exp(x))) with max subtraction; -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> x);

double normal_cdf(double x);
double normal_log_cdf(double x);
double normal_quantile(double p);

/// Shortest decimal string that parses back to exactly `x`.
std::string format_double(double x);

}  // namespace psmc
