// pathlab: command-line driver for the experiment harness.
//
// Exit codes: 0 all checks pass, 1 configuration or validation error, 2 numerical failure,
// 3 some inequality check failed, 4 only inconclusive checks besides passes.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pathlab/coefficients.hpp"
#include "pathlab/config.hpp"
#include "pathlab/error.hpp"
#include "pathlab/experiments.hpp"
#include "pathlab/report.hpp"
#include "pathlab/zvonkin.hpp"

namespace fs = std::filesystem;
using namespace pathlab;

namespace {

struct Options {
  std::string config;
  std::string dir;
  unsigned workers = 0;
  std::size_t samples = 2000;
  std::size_t replicas = 0;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = load_config(o.config);
  if (o.workers) c.workers = o.workers;
  if (o.replicas) c.N_replicas = o.replicas;
  if (!o.dir.empty()) c.output_dir = o.dir;
  return c;
}

std::ofstream open_out(const ExperimentConfig& c, const std::string& name) {
  fs::create_directories(c.output_dir);
  const fs::path p = fs::path(c.output_dir) / name;
  std::ofstream out(p);
  require(out.good(), ErrorKind::Configuration, "cannot write " + p.string());
  return out;
}

template <class R>
void dump(const ExperimentConfig& c, const std::string& experiment, const R& report) {
  auto out = open_out(c, experiment + ".csv");
  write_stat_csv(out, experiment, report.coefficients, stat_rows(report));
}

int finish(const ExperimentConfig& c, const Summary& s) {
  auto out = open_out(c, "summary.txt");
  s.write(out);
  s.write(std::cout);
  return s.exit_code();
}

int cmd_validate(const Options& o) {
  const ExperimentConfig c = load(o);
  const CoefficientSet coeffs = c.build_coefficients();
  coeffs.phi.validate();
  const double dini = dini_integral(coeffs.phi);
  const ValidationReport rep = validate_H(coeffs, c.path(), o.samples, c.seed, c.workers);
  auto out = open_out(c, "validation.csv");
  out << "check,worst_ratio,passed,message\n";
  for (const auto& ch : rep.checks) {
    out << ch.name << "," << ch.worst_ratio << "," << (ch.passed ? 1 : 0) << ",\"" << ch.message << "\"\n";
    std::cout << (ch.passed ? "PASS " : "FAIL ") << ch.name << " worst_ratio=" << ch.worst_ratio << " " << ch.message
              << "\n";
  }
  std::cout << "dini integral of " << coeffs.phi.describe() << " = " << dini << "\n";
  std::cout << "samples=" << rep.samples << " K=" << coeffs.K << " K1=" << coeffs.K1 << " alpha=" << coeffs.alpha
            << "\n";
  return rep.passed() ? 0 : 1;
}

int cmd_zvonkin(const Options& o) {
  const ExperimentConfig c = load(o);
  const Lab lab = make_lab(c);
  if (!lab.map) {
    std::cout << "b0 vanishes for '" << lab.coeffs.name << "': no transform needed\n";
    return 0;
  }
  auto csv = open_out(c, "zvonkin.csv");
  write_csv(csv, *lab.map);
  auto meta = open_out(c, "zvonkin_meta.json");
  const std::string json = metadata_json(*lab.map, lab.sweep ? &*lab.sweep : nullptr);
  meta << json << "\n";
  std::cout << json << "\n";
  return 0;
}

void run_named(const std::string& name, const Lab& lab, Summary& s) {
  const ExperimentConfig& c = lab.config;
  if (name == "decay") {
    const DecayReport r = run_decay(lab);
    dump(c, "decay", r);
    s.add(r);
  } else if (name == "entropy") {
    const EntropyReport r = run_entropy(lab);
    dump(c, "entropy", r);
    s.add(r);
  } else if (name == "alh") {
    const TestFunction f = TestFunction::from_config(lab);
    const AlhReport r = run_alh(lab, f, make_law_pairs(lab, 6, 0, 0.3), make_law_pairs(lab, 6, 1, 0.3));
    dump(c, "alh", r);
    s.add(r);
  } else if (name == "growth") {
    const auto pair = make_law_pairs(lab, 3, 0, 0.3)[2];
    const GrowthReport r = run_w2_growth(lab, pair.mu, pair.nu);
    dump(c, "growth", r);
    s.add(r);
  } else if (name == "gradient") {
    const EntropyReport e = run_entropy(lab);
    const DecayReport d = run_decay(lab);
    const GradientReport r = run_gradient_estimate(lab, TestFunction::from_config(lab), e, d);
    dump(c, "gradient", r);
    s.add(r);
  }
}

int cmd_experiment(const Options& o, const std::vector<std::string>& names) {
  const ExperimentConfig c = load(o);
  for (const auto& n : names)
    if (n != "growth" && n != "alh") c.require_kappa();
  const Lab lab = make_lab(c);
  {
    auto cfg_out = open_out(c, "config_used.cfg");
    cfg_out << c.to_text();
  }
  Summary s;
  for (const auto& n : names) run_named(n, lab, s);
  return finish(c, s);
}

int cmd_report(const Options& o) {
  std::string dir = o.dir;
  if (dir.empty()) {
    require(!o.config.empty(), ErrorKind::Configuration, "report needs --config or --dir");
    dir = load(o).output_dir;
  }
  const fs::path p = fs::path(dir) / "summary.txt";
  std::ifstream in(p);
  require(in.good(), ErrorKind::Configuration, "no summary at " + p.string());
  const Summary s = read_summary(in);
  s.write(std::cout);
  return s.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pathlab: path-space couplings, entropy and Wasserstein experiments"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> experiments{"decay", "entropy", "alh", "growth", "gradient"};

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("-c,--config", o.config, "config file (key=value)");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", o.dir, "output directory (overrides output.dir)");
    sub->add_option("-j,--workers", o.workers, "worker threads (0: all)");
  };
  auto* validate = app.add_subcommand("validate", "sample the standing hypotheses of the coefficients");
  add_common(validate, true);
  validate->add_option("--samples", o.samples, "sample budget");
  auto* zvonkin = app.add_subcommand("zvonkin", "solve the resolvent equation and export the transform");
  add_common(zvonkin, true);
  std::vector<CLI::App*> subs;
  for (const auto& name : experiments) {
    auto* sub = app.add_subcommand(name, name + " experiment");
    add_common(sub, true);
    sub->add_option("--replicas", o.replicas, "override sim.N_replicas");
    subs.push_back(sub);
  }
  auto* all = app.add_subcommand("all", "run every experiment");
  add_common(all, true);
  all->add_option("--replicas", o.replicas, "override sim.N_replicas");
  auto* report = app.add_subcommand("report", "print an existing summary");
  add_common(report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (validate->parsed()) return cmd_validate(o);
    if (zvonkin->parsed()) return cmd_zvonkin(o);
    if (report->parsed()) return cmd_report(o);
    if (all->parsed()) return cmd_experiment(o, experiments);
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return cmd_experiment(o, {experiments[i]});
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.numerical() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
