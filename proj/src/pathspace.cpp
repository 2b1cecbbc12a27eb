#include "pathlab/pathspace.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>

#include "pathlab/error.hpp"

namespace pathlab {

PathSpaceConfig PathSpaceConfig::make(int d, double tau, double h, double T_mem) {
  require(d >= 1 && d <= kMaxDim, ErrorKind::Configuration,
          "state dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  require(tau > 0 && std::isfinite(tau), ErrorKind::Configuration, "tau must be positive");
  require(h > 0 && std::isfinite(h), ErrorKind::Configuration, "grid step h must be positive");
  require(T_mem >= h && std::isfinite(T_mem), ErrorKind::Configuration, "T_mem must be at least h");
  const double ratio = T_mem / h;
  require(std::abs(ratio - std::round(ratio)) < 1e-9 * std::max(1.0, ratio), ErrorKind::Configuration,
          "T_mem must be an integer multiple of h");
  return PathSpaceConfig{d, tau, h, T_mem};
}

std::size_t PathSpaceConfig::steps() const { return static_cast<std::size_t>(std::llround(T_mem / h)); }

double PathSpaceConfig::truncation_factor() const { return std::exp(-tau * T_mem); }

std::size_t PathSpaceConfig::grid_index(double t, const char* what) const {
  const double ratio = t / h;
  const double r = std::round(ratio);
  require(std::abs(ratio - r) < 1e-9 * std::max(1.0, std::abs(ratio)), ErrorKind::Precondition,
          std::string(what) + " must be a multiple of the grid step h");
  require(r >= 0, ErrorKind::Precondition, std::string(what) + " must be nonnegative");
  return static_cast<std::size_t>(r);
}

SegmentKernel::SegmentKernel(const PathSpaceConfig& cfg) {
  const std::size_t n = cfg.size();
  const double rho = cfg.memory_rate();
  times.resize(n);
  norm_weight.resize(n);
  memory_exp.resize(n);
  double plain = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // Anchor at s = 0 so the endpoint is exactly 0.
    times[i] = -static_cast<double>(n - 1 - i) * cfg.h;
    norm_weight[i] = std::exp(cfg.tau * times[i]);
    memory_exp[i] = std::exp(rho * times[i]);
    plain += memory_exp[i];
  }
  memory_mass = cfg.h * plain - 0.5 * cfg.h * (memory_exp.front() + memory_exp.back());
  memory_decay = std::exp(-rho * cfg.h);
}

namespace {

std::shared_ptr<const SegmentKernel> kernel_for(const PathSpaceConfig& cfg) {
  static std::mutex mutex;
  static std::vector<std::pair<PathSpaceConfig, std::shared_ptr<const SegmentKernel>>> cache;
  std::lock_guard lock(mutex);
  for (const auto& [key, kernel] : cache)
    if (key == cfg) return kernel;
  auto kernel = std::make_shared<const SegmentKernel>(cfg);
  if (cache.size() > 16) cache.erase(cache.begin());
  cache.emplace_back(cfg, kernel);
  return kernel;
}

double magnitude(const double* x, int d) {
  if (d == 1) return std::abs(x[0]);
  double s = 0;
  for (int k = 0; k < d; ++k) s += x[k] * x[k];
  return std::sqrt(s);
}

}  // namespace

PathSegment::PathSegment(const PathSpaceConfig& cfg, std::vector<double> values)
    : cfg_(cfg), kernel_(kernel_for(cfg)), n_(cfg.size()), buf_(std::move(values)) {
  require(buf_.size() == n_ * static_cast<std::size_t>(cfg_.d), ErrorKind::InvalidSegment,
          "segment needs " + std::to_string(n_) + " samples of dimension " + std::to_string(cfg_.d));
  for (std::size_t i = 0; i < buf_.size(); ++i)
    require(std::isfinite(buf_[i]), ErrorKind::InvalidSegment,
            "non-finite entry at sample " + std::to_string(i / cfg_.d));
  rebuild();
}

PathSegment PathSegment::zero(const PathSpaceConfig& cfg) {
  return PathSegment(cfg, std::vector<double>(cfg.size() * cfg.d, 0.0));
}

PathSegment PathSegment::constant(const PathSpaceConfig& cfg, const Vec& value) {
  require(value.size() == cfg.d, ErrorKind::Configuration, "constant segment: dimension mismatch");
  std::vector<double> v(cfg.size() * cfg.d);
  for (std::size_t i = 0; i < cfg.size(); ++i)
    for (int k = 0; k < cfg.d; ++k) v[i * cfg.d + k] = value(k);
  return PathSegment(cfg, std::move(v));
}

PathSegment PathSegment::from_function(const PathSpaceConfig& cfg, const std::function<Vec(double)>& path) {
  const auto kernel = kernel_for(cfg);
  std::vector<double> v(cfg.size() * cfg.d);
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const Vec x = path(kernel->times[i]);
    require(x.size() == cfg.d, ErrorKind::Configuration, "path function: dimension mismatch");
    for (int k = 0; k < cfg.d; ++k) v[i * cfg.d + k] = x(k);
  }
  return PathSegment(cfg, std::move(v));
}

Vec PathSegment::value(std::size_t i) const {
  Vec v(cfg_.d);
  const double* p = &buf_[physical(i) * cfg_.d];
  for (int k = 0; k < cfg_.d; ++k) v(k) = p[k];
  return v;
}

std::vector<double> PathSegment::values() const {
  std::vector<double> out(buf_.size());
  const std::size_t d = cfg_.d;
  for (std::size_t i = 0; i < n_; ++i)
    std::copy_n(&buf_[physical(i) * d], d, &out[i * d]);
  return out;
}

double PathSegment::norm_factor(std::uint64_t from, std::uint64_t to) const {
  // Both indices lie in the current window, so the factor is a kernel weight ratio.
  return std::exp(-cfg_.tau * cfg_.h * static_cast<double>(to - from));
}

void PathSegment::append_norm(std::uint64_t index, double mag) {
  while (!norm_window_.empty() &&
         norm_window_.back().magnitude * norm_factor(norm_window_.back().index, index) <= mag)
    norm_window_.pop_back();
  norm_window_.push_back({index, mag});
}

void PathSegment::rebuild() {
  const int d = cfg_.d;
  norm_window_.clear();
  memory_sum_.assign(d, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    const double* x = &buf_[physical(i) * d];
    append_norm(pushes_ + i, magnitude(x, d));
    for (int k = 0; k < d; ++k) memory_sum_[k] += kernel_->memory_exp[i] * x[k];
  }
  since_rebuild_ = 0;
}

double PathSegment::weighted_norm() const {
  const NormEntry& top = norm_window_.front();
  return top.magnitude * kernel_->norm_weight[top.index - pushes_];
}

double PathSegment::memory_integral(int k) const {
  const double oldest = buf_[physical(0) * cfg_.d + k];
  const double newest = buf_[physical(n_ - 1) * cfg_.d + k];
  return cfg_.h * memory_sum_[k] - 0.5 * cfg_.h * (kernel_->memory_exp.front() * oldest + newest);
}

Vec PathSegment::memory_integral() const {
  Vec v(cfg_.d);
  for (int k = 0; k < cfg_.d; ++k) v(k) = memory_integral(k);
  return v;
}

void PathSegment::push(std::span<const double> value) {
  const int d = cfg_.d;
  require(value.size() == static_cast<std::size_t>(d), ErrorKind::InvalidSegment, "push: dimension mismatch");
  for (int k = 0; k < d; ++k)
    require(std::isfinite(value[k]), ErrorKind::InvalidSegment, "push: non-finite value");
  double* slot = &buf_[head_ * d];  // oldest sample, about to be overwritten
  for (int k = 0; k < d; ++k) {
    memory_sum_[k] = kernel_->memory_decay * (memory_sum_[k] - kernel_->memory_exp[0] * slot[k]) + value[k];
    slot[k] = value[k];
  }
  head_ = head_ + 1 == n_ ? 0 : head_ + 1;
  ++pushes_;
  while (!norm_window_.empty() && norm_window_.front().index < pushes_) norm_window_.pop_front();
  append_norm(newest_index(), magnitude(value.data(), d));
  if (++since_rebuild_ >= n_) rebuild();
}

void PathSegment::push(const Vec& value) { push(std::span<const double>(value.data(), value.size())); }

namespace {

void require_compatible(const PathSegment& a, const PathSegment& b) {
  require(a.config() == b.config(), ErrorKind::Configuration, "segments use different path-space configurations");
}

}  // namespace

PathSegment& PathSegment::operator+=(const PathSegment& other) {
  require_compatible(*this, other);
  std::vector<double> a = values();
  const std::vector<double> b = other.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  *this = PathSegment(cfg_, std::move(a));
  return *this;
}

PathSegment& PathSegment::operator-=(const PathSegment& other) {
  require_compatible(*this, other);
  std::vector<double> a = values();
  const std::vector<double> b = other.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  *this = PathSegment(cfg_, std::move(a));
  return *this;
}

PathSegment& PathSegment::operator*=(double c) {
  std::vector<double> a = values();
  for (double& v : a) v *= c;
  *this = PathSegment(cfg_, std::move(a));
  return *this;
}

PathSegment operator+(PathSegment a, const PathSegment& b) { return a += b; }
PathSegment operator-(PathSegment a, const PathSegment& b) { return a -= b; }
PathSegment operator*(double c, PathSegment a) { return a *= c; }

double weighted_norm(const PathSegment& seg) { return seg.weighted_norm(); }

double truncated_norm(const PathSegment& seg, double N) {
  const auto& cfg = seg.config();
  require(N > 0 && N <= cfg.T_mem * (1 + 1e-12), ErrorKind::Precondition, "truncation level must lie in (0, T_mem]");
  const std::size_t j = cfg.grid_index(N, "truncation level");
  const std::size_t n = seg.size();
  double best = 0.0;
  for (std::size_t i = n - 1 - j; i < n; ++i) {
    double m = 0;
    for (int k = 0; k < cfg.d; ++k) m += seg(i, k) * seg(i, k);
    best = std::max(best, std::exp(cfg.tau * seg.time(i)) * std::sqrt(m));
  }
  return best;
}

std::vector<double> truncated_norm_profile(const PathSegment& seg) {
  const auto& cfg = seg.config();
  const std::size_t n = seg.size();
  std::vector<double> out(n);
  double best = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = n - 1 - j;
    double m = 0;
    for (int k = 0; k < cfg.d; ++k) m += seg(i, k) * seg(i, k);
    best = std::max(best, std::exp(cfg.tau * seg.time(i)) * std::sqrt(m));
    out[j] = best;
  }
  return out;
}

PathSegment advance(PathSegment seg, const Vec& new_value) {
  seg.push(new_value);
  return seg;
}

PathSegment flat_extension(const PathSegment& seg) { return PathSegment::constant(seg.config(), seg.endpoint()); }

bool check_history_inequality(const PathSegment& seg0, std::span<const Vec> future_values, double p) {
  require(p > 0, ErrorKind::Precondition, "exponent p must be positive");
  const auto& cfg = seg0.config();
  const double norm0_p = std::pow(seg0.weighted_norm(), p);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < seg0.size(); ++i) max_abs = std::max(max_abs, seg0.value(i).norm());
  for (const Vec& v : future_values) max_abs = std::max(max_abs, v.norm());
  const double tolerance = std::exp(-p * cfg.tau * cfg.T_mem) * std::pow(max_abs, p);

  PathSegment seg = seg0;
  double running_sup = std::pow(seg0.endpoint().norm(), p);  // s = 0 term
  for (std::size_t k = 1; k <= future_values.size(); ++k) {
    seg.push(future_values[k - 1]);
    const double t = static_cast<double>(k) * cfg.h;
    const double growth = std::exp(p * cfg.tau * t);
    running_sup = std::max(running_sup, growth * std::pow(future_values[k - 1].norm(), p));
    const double lhs = growth * std::pow(seg.weighted_norm(), p);
    const double rhs = norm0_p + running_sup;
    if (lhs > rhs * (1 + 1e-12) + growth * tolerance) return false;
  }
  return true;
}

void write_csv(std::ostream& out, const PathSegment& seg) {
  const auto& cfg = seg.config();
  const int decimals = std::max(0, static_cast<int>(std::ceil(-std::log10(cfg.h) - 1e-9)));
  out << "s";
  for (int k = 0; k < cfg.d; ++k) out << ",x" << (k + 1);
  out << "\n";
  for (std::size_t i = 0; i < seg.size(); ++i) {
    out << std::fixed << std::setprecision(decimals) << seg.time(i);
    out << std::defaultfloat << std::setprecision(17);
    for (int k = 0; k < cfg.d; ++k) out << "," << seg(i, k);
    out << "\n";
  }
}

PathSegment read_csv(std::istream& in, const PathSpaceConfig& cfg) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::InvalidSegment, "segment CSV: missing header");
  std::string expected = "s";
  for (int k = 0; k < cfg.d; ++k) expected += ",x" + std::to_string(k + 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == expected, ErrorKind::InvalidSegment, "segment CSV: header must be '" + expected + "'");
  const auto kernel = kernel_for(cfg);
  std::vector<double> values;
  values.reserve(cfg.size() * cfg.d);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    require(cells.size() == static_cast<std::size_t>(cfg.d + 1), ErrorKind::InvalidSegment,
            "segment CSV: wrong column count at row " + std::to_string(row));
    require(row < cfg.size(), ErrorKind::InvalidSegment, "segment CSV: too many rows");
    require(std::abs(cells[0] - kernel->times[row]) <= 0.5 * cfg.h, ErrorKind::InvalidSegment,
            "segment CSV: time column off grid at row " + std::to_string(row));
    values.insert(values.end(), cells.begin() + 1, cells.end());
    ++row;
  }
  require(row == cfg.size(), ErrorKind::InvalidSegment, "segment CSV: expected " + std::to_string(cfg.size()) + " rows");
  return PathSegment(cfg, std::move(values));
}

}  // namespace pathlab
