#include "otsmc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "otsmc/parallel.hpp"

namespace otsmc {

ReferenceMoments analytic_reference(const TargetModel& model) {
  const auto moments = model.exact_moments();
  if (!moments) throw std::invalid_argument("analytic_reference: model '" + model.name() + "' has no exact moments");
  ReferenceMoments ref;
  ref.mean = moments->mean;
  ref.diag_variance = moments->diag_variance;
  ref.provenance = "analytic";
  return ref;
}

double rmse_mean(const Ensemble& e, const ReferenceMoments& ref) {
  if (static_cast<std::size_t>(ref.mean.size()) != e.dimension())
    throw std::invalid_argument("rmse_mean: dimension mismatch");
  const double err = (weighted_mean(e) - ref.mean).norm();
  const double scale = ref.mean.norm();
  return scale > 0 ? err / scale : err;
}

double variance_ratio(const Ensemble& e, const ReferenceMoments& ref) {
  if (static_cast<std::size_t>(ref.diag_variance.size()) != e.dimension())
    throw std::invalid_argument("variance_ratio: dimension mismatch");
  return (weighted_diag_variance(e).array() / ref.diag_variance.array()).mean();
}

double effective_sample_size(const std::vector<double>& chain) {
  const std::size_t n = chain.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double x : chain) mean += x;
  mean /= static_cast<double>(n);
  const auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (chain[t] - mean) * (chain[t + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0)) return static_cast<double>(n);
  // Geyer's initial positive sequence over pairs of lags.
  double tau = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < n / 2; ++m) {
    const double pair = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
    if (pair <= 0) break;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

ReferenceMoments mcmc_reference(const TargetModel& model, const OracleOptions& opt) {
  if (opt.length < 2) throw std::invalid_argument("mcmc_reference: chain too short");
  const std::size_t burn = opt.burn_in == 0 ? opt.length / 5 : opt.burn_in;
  if (burn >= opt.length) throw std::invalid_argument("mcmc_reference: burn-in must be shorter than the chain");
  const std::size_t kept = opt.length - burn;
  const std::size_t thin = std::max<std::size_t>(1, kept / 20000);
  const auto dim = static_cast<Eigen::Index>(model.dimension());
  const Vector m0 = model.initial_mean();

  Rng rng = make_rng(opt.seed, Stream::kOracle);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto safe_potential = [&](const Vector& u) {
    try {
      const double v = model.log_potential(u);
      return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  Vector u = model.sample_initial(rng);
  double v = safe_potential(u);
  double step = opt.initial_step;
  std::size_t window_acc = 0, window_n = 0, kept_acc = 0;
  Vector mean = Vector::Zero(dim);
  Vector m2 = Vector::Zero(dim);
  std::size_t count = 0;
  std::vector<std::vector<double>> traces(static_cast<std::size_t>(dim));

  for (std::size_t t = 0; t < opt.length; ++t) {
    const Vector x = model.sample_initial(rng);
    const Vector cand = m0 + std::sqrt(1.0 - step * step) * (u - m0) + step * (x - m0);
    const double vc = safe_potential(cand);
    const bool accept = std::isfinite(vc) && std::log(unif(rng)) < vc - v;
    if (accept) {
      u = cand;
      v = vc;
    }
    if (t < burn) {
      window_acc += accept;
      if (++window_n == opt.adapt_window) {
        const double rate = static_cast<double>(window_acc) / static_cast<double>(window_n);
        if (rate < 0.15) {
          step /= 2.0;
        } else if (rate > 0.85) {
          step = std::min(1.0, 2.0 * step);
        }
        window_acc = 0;
        window_n = 0;
      }
      continue;
    }
    kept_acc += accept;
    ++count;
    const Vector delta = u - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta.cwiseProduct(u - mean);
    if ((t - burn) % thin == 0)
      for (Eigen::Index d = 0; d < dim; ++d) traces[static_cast<std::size_t>(d)].push_back(u(d));
  }

  ReferenceMoments ref;
  ref.mean = mean;
  ref.diag_variance = m2 / static_cast<double>(count);
  ref.provenance = "mcmc";
  ref.chain_length = opt.length;
  ref.burn_in = burn;
  ref.seed = opt.seed;
  ref.step = step;
  ref.acceptance_rate = static_cast<double>(kept_acc) / static_cast<double>(kept);
  ref.min_ess = std::numeric_limits<double>::infinity();
  for (const auto& trace : traces) ref.min_ess = std::min(ref.min_ess, effective_sample_size(trace));
  if (ref.acceptance_rate < 0.05 || ref.acceptance_rate > 0.9) {
    std::ostringstream msg;
    msg << "OracleQuality: post-burn-in acceptance rate " << ref.acceptance_rate << " outside [0.05, 0.9]";
    ref.warning = msg.str();
  }
  return ref;
}

void write_moments_json(std::ostream& out, const ReferenceMoments& ref) {
  nlohmann::ordered_json j;
  j["provenance"] = ref.provenance;
  j["chain_length"] = ref.chain_length;
  j["burn_in"] = ref.burn_in;
  j["seed"] = ref.seed;
  j["acceptance_rate"] = ref.acceptance_rate;
  j["step"] = ref.step;
  j["min_ess"] = std::isfinite(ref.min_ess) ? ref.min_ess : 0.0;
  j["warning"] = ref.warning;
  j["mean"] = std::vector<double>(ref.mean.begin(), ref.mean.end());
  j["diag_variance"] = std::vector<double>(ref.diag_variance.begin(), ref.diag_variance.end());
  out << j.dump(2) << '\n';
}

ReferenceMoments read_moments_json(std::istream& in) {
  const auto j = nlohmann::json::parse(in);
  ReferenceMoments ref;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto var = j.at("diag_variance").get<std::vector<double>>();
  if (mean.size() != var.size() || mean.empty()) throw std::runtime_error("moments file: mean/variance length mismatch");
  ref.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  ref.diag_variance = Eigen::Map<const Vector>(var.data(), static_cast<Eigen::Index>(var.size()));
  if ((ref.diag_variance.array() <= 0).any()) throw std::runtime_error("moments file: variances must be positive");
  ref.provenance = j.value("provenance", "unknown");
  ref.chain_length = j.value("chain_length", std::size_t{0});
  ref.burn_in = j.value("burn_in", std::size_t{0});
  ref.seed = j.value("seed", std::uint64_t{0});
  ref.acceptance_rate = j.value("acceptance_rate", 0.0);
  ref.step = j.value("step", 0.0);
  ref.min_ess = j.value("min_ess", 0.0);
  ref.warning = j.value("warning", "");
  return ref;
}

AggregateRow repeat_runs(const TargetModel& model, const ReferenceMoments& ref, const RunOptions& base,
                         std::size_t n_runs, unsigned threads, std::vector<RunMetrics>* per_run) {
  std::vector<RunMetrics> metrics(n_runs);
  parallel_for(n_runs, threads, [&](std::size_t r) {
    RunOptions opt = base;
    opt.seed = base.seed + r;
    opt.threads = 1;
    try {
      const RunReport report = run(model, opt);
      metrics[r].rmse_mean = rmse_mean(report.final_ensemble, ref);
      metrics[r].variance_ratio = variance_ratio(report.final_ensemble, ref);
      metrics[r].temperatures = report.temperatures();
      metrics[r].forward_solves = report.forward_solves;
      metrics[r].ok = true;
    } catch (const std::exception& err) {
      metrics[r].error = err.what();
    }
  });

  AggregateRow row;
  row.method = std::string(to_string(base.method));
  row.particles = base.particles;
  row.mutations = base.mutations;
  row.n_runs = n_runs;
  // Welford accumulators keep the std of a constant series at exactly 0.
  struct Acc {
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    void add(double x) {
      ++n;
      const double d = x - mean;
      mean += d / static_cast<double>(n);
      m2 += d * (x - mean);
    }
    double std() const { return n < 2 ? 0.0 : std::sqrt(m2 / static_cast<double>(n - 1)); }
  } rmse, ratio, temps, solves;
  for (const auto& m : metrics) {
    if (!m.ok) {
      ++row.failures;
      continue;
    }
    rmse.add(m.rmse_mean);
    ratio.add(m.variance_ratio);
    temps.add(static_cast<double>(m.temperatures));
    solves.add(static_cast<double>(m.forward_solves));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool any = rmse.n > 0;
  row.rmse_mean_avg = any ? rmse.mean : nan;
  row.rmse_mean_std = any ? rmse.std() : nan;
  row.r_avg = any ? ratio.mean : nan;
  row.r_std = any ? ratio.std() : nan;
  row.k_avg = any ? temps.mean : nan;
  row.solves_avg = any ? solves.mean : nan;
  if (per_run != nullptr) *per_run = std::move(metrics);
  return row;
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "method,N,p,n_runs,rmse_mean_avg,rmse_mean_std,R_avg,R_std,K_avg,solves_avg\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.particles << ',' << r.mutations << ',' << r.n_runs << ',' << r.rmse_mean_avg << ','
        << r.rmse_mean_std << ',' << r.r_avg << ',' << r.r_std << ',' << r.k_avg << ',' << r.solves_avg << '\n';
  }
  out.precision(old_precision);
}

void write_trace_csv(std::ostream& out, const RunReport& report) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "k,tau,ess,rho,acceptance_rate,accepted,proposed,solves\n";
  for (const auto& r : report.records) {
    out << r.k << ',' << r.tau << ',' << r.ess << ',' << r.rho << ',' << r.acceptance_rate << ',' << r.accepted << ','
        << r.proposed << ',' << r.forward_solves << '\n';
  }
  out.precision(old_precision);
}

}  // namespace otsmc
