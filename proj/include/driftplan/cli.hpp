#pragma once

// Command-line front end. Subcommands: gen-field, ingest, train, eval,
// compare, config. Exit codes: 0 success or --help, 2 usage errors (bad
// flags, unknown config keys, invalid values), 1 runtime failures.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "driftplan/controllers.hpp"
#include "driftplan/episode.hpp"
#include "driftplan/policy.hpp"

namespace driftplan {

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Over trials where both methods reached the goal.
struct PairedStats {
  int paired_successes = 0;
  double drl_mean_time = 0.0;
  double ilqr_mean_time = 0.0;
  double time_saving = 0.0;  // 1 - drl / ilqr
  double drl_mean_step = 0.0;
  double ilqr_mean_step = 0.0;
  double step_saving = 0.0;
};

struct AreaComparison {
  std::string area;
  BatchSummary drl;
  BatchSummary ilqr;
  PairedStats paired;
};

// Both methods run trial i from the same seed, hence the same start and goal.
AreaComparison compare_area(const std::string& area, const EnvSpec& env,
                            std::shared_ptr<const PolicyWeights> weights, ActionSelection selection,
                            const RecedingHorizonConfig& ilqr, int trials, std::uint64_t seed, int workers,
                            CostAveraging averaging);

PairedStats paired_stats(const BatchSummary& drl, const BatchSummary& ilqr);

// `area,method,trials,successes,success_rate,avg_time_cost,std_time_cost,avg_step_cost,std_step_cost`
void write_summary_header(std::ostream& out);
void write_summary_row(std::ostream& out, const std::string& area, Method method, const BatchSummary& s);

// `area,paired_successes,drl_mean_time,ilqr_mean_time,time_saving,drl_mean_step,ilqr_mean_step,step_saving`
void write_paired_header(std::ostream& out);
void write_paired_row(std::ostream& out, const std::string& area, const PairedStats& p);

}  // namespace driftplan
