#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "otsmc/ensemble.hpp"
#include "otsmc/models.hpp"
#include "otsmc/tempering.hpp"

namespace otsmc {

struct ReferenceMoments {
  Vector mean;
  Vector diag_variance;
  /// "analytic" or "mcmc"
  std::string provenance = "analytic";
  std::size_t chain_length = 0;
  std::size_t burn_in = 0;
  std::uint64_t seed = 0;
  double acceptance_rate = 0.0;
  double step = 0.0;          ///< final pCN step size beta
  double min_ess = 0.0;       ///< smallest per-coordinate effective sample size
  std::string warning;        ///< non-empty when the chain looked unhealthy
};

ReferenceMoments analytic_reference(const TargetModel& model);

/// ||mean(e) - ref.mean|| / ||ref.mean||, or the absolute error when the
/// reference mean is zero.
double rmse_mean(const Ensemble& e, const ReferenceMoments& ref);

/// (1/D) sum_d var_d(e) / ref.var_d with the population variance.
double variance_ratio(const Ensemble& e, const ReferenceMoments& ref);

struct OracleOptions {
  std::size_t length = 200000;
  std::size_t burn_in = 0;  ///< 0 selects 20% of length
  std::uint64_t seed = 1;
  std::size_t adapt_window = 500;
  double initial_step = 0.2;
};

/// Preconditioned Crank-Nicolson chain on the posterior
///   u' = m0 + sqrt(1 - b^2)(u - m0) + b (x - m0),  x ~ mu0,
/// accepted with probability min(1, exp(V(u') - V(u))). b is adapted by
/// doubling/halving during burn-in only.
ReferenceMoments mcmc_reference(const TargetModel& model, const OracleOptions& opt);

/// Initial positive sequence estimate of the effective sample size.
double effective_sample_size(const std::vector<double>& chain);

void write_moments_json(std::ostream& out, const ReferenceMoments& ref);
ReferenceMoments read_moments_json(std::istream& in);

struct AggregateRow {
  std::string method;
  std::size_t particles = 0;
  std::size_t mutations = 0;
  std::size_t n_runs = 0;
  std::size_t failures = 0;
  double rmse_mean_avg = 0.0;
  double rmse_mean_std = 0.0;
  double r_avg = 0.0;
  double r_std = 0.0;
  double k_avg = 0.0;
  double solves_avg = 0.0;
};

struct RunMetrics {
  bool ok = false;
  std::string error;
  double rmse_mean = 0.0;
  double variance_ratio = 0.0;
  std::size_t temperatures = 0;
  std::size_t forward_solves = 0;
};

/// Runs seeds seed .. seed + n_runs - 1 in parallel over `threads`
/// workers (each run itself single-threaded) and aggregates the metrics.
/// Failed runs are counted and excluded.
AggregateRow repeat_runs(const TargetModel& model, const ReferenceMoments& ref,
                         const RunOptions& base, std::size_t n_runs, unsigned threads,
                         std::vector<RunMetrics>* per_run = nullptr);

/// Header `method,N,p,n_runs,rmse_mean_avg,rmse_mean_std,R_avg,R_std,K_avg,solves_avg`.
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

/// Per-temperature trace `k,tau,ess,rho,acceptance_rate,accepted,proposed,solves`.
void write_trace_csv(std::ostream& out, const RunReport& report);

}  // namespace otsmc
