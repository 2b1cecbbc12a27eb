#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pathlab {

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

// Sample mean and its standard error, accumulated in index order.
Estimate mean_estimate(std::span<const double> samples);

// log of a sample mean with delta-method standard error; requires a positive mean.
Estimate log_mean_estimate(std::span<const double> samples);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  std::size_t points = 0;
};

// Least squares y ≈ intercept + slope·x. With `sigma` the fit is weighted by 1/sigma² and the slope
// error combines the propagated errors with the residual scatter (whichever is larger); without it
// the slope error is the usual residual-based one.
LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> sigma = {});

// Effective sample size (Σw)²/Σw² of nonnegative weights.
double effective_sample_size(std::span<const double> weights);

// Empirical 1-Wasserstein distance between two equal-size samples on the real line.
double empirical_w1_1d(std::vector<double> a, std::vector<double> b);

}  // namespace pathlab
