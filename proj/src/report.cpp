#include "pathlab/report.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

#include "pathlab/error.hpp"

namespace pathlab {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string common(double h, std::size_t replicas, double truncation) {
  return "h=" + num(h) + " replicas=" + std::to_string(replicas) + " e^{-tau T_mem}=" + num(truncation);
}

}  // namespace

std::vector<StatRow> stat_rows(const DecayReport& r) {
  std::vector<StatRow> rows;
  for (std::size_t k = 0; k < r.moments.size(); ++k) {
    const std::string name = "E_norm_Z^" + num(r.fits[k].p);
    for (std::size_t j = 0; j < r.times.size(); ++j)
      rows.push_back({"pair", r.times[j], name, r.moments[k][j].mean, r.moments[k][j].std_error});
  }
  for (const auto& f : r.fits) rows.push_back({"fit", 0.0, "rate_p" + num(f.p), f.fit.slope, f.fit.slope_stderr});
  rows.push_back({"fit", 0.0, "gradient_constant", r.gradient_constant, 0.0});
  return rows;
}

std::vector<StatRow> stat_rows(const EntropyReport& r) {
  std::vector<StatRow> rows;
  for (const auto* grid : {&r.training, &r.held_out})
    for (const auto& pt : *grid) {
      for (std::size_t j = 0; j < r.times.size(); ++j)
        rows.push_back({pt.label, r.times[j], "H", pt.H[j].mean, pt.H[j].std_error});
      rows.push_back({pt.label, r.times.back(), "distance", pt.distance, 0.0});
      rows.push_back({pt.label, r.times.back(), "required_c", pt.required_c, 0.0});
      rows.push_back({pt.label, r.times.back(), "plateau_gap", pt.plateau_gap.mean, pt.plateau_gap.std_error});
    }
  rows.push_back({"fit", 0.0, "c", r.c, 0.0});
  return rows;
}

std::vector<StatRow> stat_rows(const AlhReport& r) {
  std::vector<StatRow> rows;
  for (const auto* grid : {&r.training, &r.held_out})
    for (const auto& pt : *grid) {
      rows.push_back({pt.label, pt.t, "lhs", pt.lhs.mean, pt.lhs.std_error});
      rows.push_back({pt.label, pt.t, "rhs0", pt.rhs0.mean, pt.rhs0.std_error});
      rows.push_back({pt.label, pt.t, "defect", pt.defect.mean, pt.defect.std_error});
      rows.push_back({pt.label, pt.t, "excess", pt.excess.mean, pt.excess.std_error});
      rows.push_back({pt.label, pt.t, "bound_shape", pt.bound_shape, 0.0});
      rows.push_back({pt.label, pt.t, "margin", pt.margin, 0.0});
    }
  rows.push_back({"fit", 0.0, "c", r.c, 0.0});
  for (std::size_t i = 0; i < r.excess_rates.size(); ++i)
    rows.push_back({"fit", 0.0, "excess_rate", r.excess_rates[i], r.excess_rate_stderr[i]});
  return rows;
}

std::vector<StatRow> stat_rows(const GrowthReport& r) {
  std::vector<StatRow> rows;
  for (const GrowthCurve* c : {&r.base, &r.doubled}) {
    const std::string label = "N=" + std::to_string(c->particles);
    for (std::size_t j = 0; j < r.times.size(); ++j)
      rows.push_back({label, r.times[j], "W2", c->w2[j].mean, c->w2[j].std_error});
    rows.push_back({label, 0.0, "W_2+eps_initial", c->initial.mean, c->initial.std_error});
    rows.push_back({label, 0.0, "c0", c->c0, 0.0});
    if (!c->log_slope.empty()) rows.push_back({label, 0.0, "log_W2_slope", c->log_slope[0], c->log_slope[1]});
  }
  return rows;
}

std::vector<StatRow> stat_rows(const GradientReport& r) {
  std::vector<StatRow> rows;
  for (const auto& pt : r.points) {
    const std::string label = "step=" + num(pt.step);
    rows.push_back({label, pt.t, "quotient", pt.quotient.mean, pt.quotient.std_error});
    rows.push_back({label, pt.t, "variance", pt.variance.mean, pt.variance.std_error});
    rows.push_back({label, pt.t, "rhs", pt.rhs, 0.0});
    rows.push_back({label, pt.t, "margin", pt.margin, 0.0});
  }
  rows.push_back({"fit", 0.0, "lambda_hat", r.lambda_hat, 0.0});
  rows.push_back({"fit", 0.0, "gamma_constant", r.gamma_constant, 0.0});
  return rows;
}

void write_stat_csv(std::ostream& out, const std::string& experiment, const std::string& coefficients,
                    const std::vector<StatRow>& rows, bool header) {
  if (header) out << kStatHeader << "\n";
  out << std::setprecision(12);
  for (const auto& r : rows)
    out << experiment << "," << coefficients << "," << r.label << "," << r.t << "," << r.statistic << "," << r.value
        << "," << r.std_error << "\n";
}

void Summary::add(const DecayReport& r) {
  for (const auto& f : r.fits) {
    SummaryLine l;
    l.verdict = f.passed ? Verdict::Pass : Verdict::Fail;
    l.check = "decay p=" + num(f.p);
    l.coefficients = r.coefficients;
    l.statement = "exponential decay of the coupled distance";
    l.details = r.degenerate ? "degenerate pass (xi = eta) " + common(r.h, r.replicas, r.truncation_factor)
                             : "rate=" + num(f.fit.slope) + "+-" + num(f.fit.slope_stderr) + " threshold=" +
                                   num(f.threshold) + " kappa=" + num(r.kappa) + " tau0=" + num(r.tau0) +
                                   " blowups=" + std::to_string(r.blowups) + " " +
                                   common(r.h, r.replicas, r.truncation_factor);
    add(std::move(l));
  }
}

void Summary::add(const EntropyReport& r) {
  double worst = INFINITY;
  for (const auto& pt : r.held_out) worst = std::min(worst, pt.margin);
  add(SummaryLine{r.verdict, "entropy", r.coefficients, "coupling entropy bound c e^{delta|eta|^{2alpha}} |xi-eta|^2",
                  "c=" + num(r.c) + " validated=" + (r.validated ? "yes" : "no") + " min_held_margin=" + num(worst) +
                      " kappa=" + num(r.kappa) + " delta=" + num(r.delta) + " " +
                      common(r.h, r.replicas, r.truncation_factor)});
}

void Summary::add(const AlhReport& r) {
  std::string rates;
  for (std::size_t i = 0; i < r.excess_rates.size(); ++i)
    rates += (i ? ";" : "") + num(r.excess_rates[i]) + "+-" + num(r.excess_rate_stderr[i]);
  add(SummaryLine{r.verdict, "alh " + r.mode, r.coefficients, "asymptotic log-Harnack inequality",
                  "c=" + num(r.c) + " violations=" + std::to_string(r.violations) +
                      " noisy_violations=" + std::to_string(r.noisy_violations) + " excess_rates=" +
                      (r.excess_degenerate ? "none-measurable" : rates) + " tau0=" + num(r.tau0) +
                      " grad_log_f=" + num(r.grad_log_f) + " " + common(r.h, r.replicas, r.truncation_factor)});
}

void Summary::add(const GrowthReport& r) {
  add(SummaryLine{r.verdict, "w2-growth", r.coefficients, "W2 growth bound c0 e^{c0 t} W_{2+eps}",
                  "c0(N=" + std::to_string(r.base.particles) + ")=" + num(r.base.c0) + " c0(N=" +
                      std::to_string(r.doubled.particles) + ")=" + num(r.doubled.c0) +
                      " change=" + num(r.c0_change) + " violations=" + std::to_string(r.violations) +
                      " eps=" + num(r.epsilon) + " repeats=" + std::to_string(r.repeats) + " h=" + num(r.h) +
                      " e^{-tau T_mem}=" + num(r.truncation_factor)});
}

void Summary::add(const GradientReport& r) {
  add(SummaryLine{r.verdict, "gradient", r.coefficients, "gradient estimate sqrt(2 Lambda var) + |grad f| Gamma_t",
                  "f=" + r.function + " min_margin=" + num(r.min_margin) + " Lambda=" + num(r.lambda_hat) +
                      " Gamma_c=" + num(r.gamma_constant) + " tau0=" + num(r.tau0) + " h=" + num(r.h) +
                      " replicas=" + std::to_string(r.replicas)});
}

int Summary::exit_code() const {
  bool inconclusive = false;
  for (const auto& l : lines_) {
    if (l.verdict == Verdict::Fail) return 3;
    if (l.verdict == Verdict::Inconclusive) inconclusive = true;
  }
  return inconclusive ? 4 : 0;
}

void Summary::write(std::ostream& out) const {
  for (const auto& l : lines_)
    out << to_string(l.verdict) << " | " << l.check << " | " << l.coefficients << " | " << l.statement << " | "
        << l.details << "\n";
}

Summary read_summary(std::istream& in) {
  Summary s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
      const auto next = line.find(" | ", pos);
      parts.push_back(line.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
      if (next == std::string::npos) break;
      pos = next + 3;
    }
    require(parts.size() == 5, ErrorKind::Configuration, "malformed summary line: " + line);
    Verdict v;
    if (parts[0] == "PASS") v = Verdict::Pass;
    else if (parts[0] == "FAIL") v = Verdict::Fail;
    else if (parts[0] == "INCONCLUSIVE") v = Verdict::Inconclusive;
    else fail(ErrorKind::Configuration, "unknown verdict in summary: " + parts[0]);
    s.add(SummaryLine{v, parts[1], parts[2], parts[3], parts[4]});
  }
  return s;
}

}  // namespace pathlab
