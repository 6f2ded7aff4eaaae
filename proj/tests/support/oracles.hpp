#pragma once

// Independent reference computations used as expected values in tests.
// Nothing here calls into the library code it checks.

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tdadur/nnet/tensor.hpp"

namespace oracle {

// Among all integer vectors x with x_i >= 1 and sum x = target, those
// minimising sum |x_i - s_i| (ties within 1e-9), the lexicographically
// greatest one, where s = values * target / sum(values). Exhaustive.
std::vector<int> brute_force_apportion(const std::vector<double>& values, long long target);

// Central differences of `loss` with respect to every entry of every
// parameter, perturbing in place by +-h.
std::map<std::string, tdadur::nn::Tensor> finite_difference(tdadur::nn::ParameterSet& params,
                                                            const std::function<double()>& loss, double h);

// max over entries of |a - n| / max(|a|, |n|, floor).
double max_relative_error(const std::map<std::string, tdadur::nn::Tensor>& analytic,
                          const std::map<std::string, tdadur::nn::Tensor>& numeric, double floor);

// Population mean and standard deviation of log(1 + x), two-pass.
void log_moments(const std::vector<double>& xs, double& mean, double& stddev);

}  // namespace oracle
