#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pathlab/experiments.hpp"

namespace pathlab {

// Long-format statistic: one row of "experiment,coefficients,label,t,statistic,value,stderr".
struct StatRow {
  std::string label;
  double t = 0.0;
  std::string statistic;
  double value = 0.0;
  double std_error = 0.0;
};

inline constexpr const char* kStatHeader = "experiment,coefficients,label,t,statistic,value,stderr";

std::vector<StatRow> stat_rows(const DecayReport& r);
std::vector<StatRow> stat_rows(const EntropyReport& r);
std::vector<StatRow> stat_rows(const AlhReport& r);
std::vector<StatRow> stat_rows(const GrowthReport& r);
std::vector<StatRow> stat_rows(const GradientReport& r);

void write_stat_csv(std::ostream& out, const std::string& experiment, const std::string& coefficients,
                    const std::vector<StatRow>& rows, bool header = true);

struct SummaryLine {
  Verdict verdict = Verdict::Pass;
  std::string check;         // e.g. "decay p=2"
  std::string coefficients;
  std::string statement;     // which inequality is checked
  std::string details;       // constants, errors, grid parameters
};

class Summary {
 public:
  void add(SummaryLine line) { lines_.push_back(std::move(line)); }
  void add(const DecayReport& r);
  void add(const EntropyReport& r);
  void add(const AlhReport& r);
  void add(const GrowthReport& r);
  void add(const GradientReport& r);

  const std::vector<SummaryLine>& lines() const { return lines_; }
  // 0 all pass, 3 some check failed, 4 only inconclusive ones besides passes.
  int exit_code() const;
  void write(std::ostream& out) const;

 private:
  std::vector<SummaryLine> lines_;
};

// Parses a summary written by Summary::write (the verdict is the first word of each line).
Summary read_summary(std::istream& in);

}  // namespace pathlab
