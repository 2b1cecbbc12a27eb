#include "pathlab/stats.hpp"

#include <algorithm>
#include <cmath>

#include "pathlab/error.hpp"

namespace pathlab {

Estimate mean_estimate(std::span<const double> samples) {
  Estimate e;
  e.count = samples.size();
  if (samples.empty()) return e;
  // Welford, fixed order.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (double v : samples) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  e.mean = mean;
  if (n > 1) e.std_error = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  return e;
}

Estimate log_mean_estimate(std::span<const double> samples) {
  Estimate e = mean_estimate(samples);
  require(e.mean > 0.0, ErrorKind::Precondition, "log of a nonpositive sample mean");
  e.std_error = e.std_error / e.mean;
  e.mean = std::log(e.mean);
  return e;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y, std::span<const double> sigma) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::Precondition, "fit_line needs >= 2 points");
  const bool weighted = !sigma.empty();
  require(!weighted || sigma.size() == x.size(), ErrorKind::Precondition, "fit_line sigma size mismatch");
  const std::size_t n = x.size();
  std::vector<double> w(n, 1.0);
  if (weighted) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::max(sigma[i], 1e-300);
      w[i] = 1.0 / (s * s);
    }
  }
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xbar = sx / sw, ybar = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += w[i] * (x[i] - xbar) * (x[i] - xbar);
    sxy += w[i] * (x[i] - xbar) * (y[i] - ybar);
  }
  require(sxx > 0, ErrorKind::Precondition, "fit_line needs distinct abscissae");
  LineFit fit;
  fit.points = n;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  double chi2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    chi2 += w[i] * r * r;
  }
  const double dof = n > 2 ? static_cast<double>(n - 2) : 1.0;
  if (weighted) {
    fit.slope_stderr = std::sqrt(1.0 / sxx) * std::max(1.0, std::sqrt(chi2 / dof));
  } else {
    fit.slope_stderr = n > 2 ? std::sqrt(chi2 / dof / sxx) : 0.0;
  }
  return fit;
}

double effective_sample_size(std::span<const double> weights) {
  double s = 0, s2 = 0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  return s2 > 0 ? s * s / s2 : 0.0;
}

double empirical_w1_1d(std::vector<double> a, std::vector<double> b) {
  require(a.size() == b.size() && !a.empty(), ErrorKind::InvalidCloud, "W1 samples must have equal nonzero size");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

}  // namespace pathlab
